import csv
import json
import logging
import math
from pathlib import Path
from typing import Iterable, List, Literal

from pydantic import ValidationError

from app.config import settings
from app.deadlines.schemas import DeadlinePolicy, ReadingSpeedPolicy
from app.deadlines.services import deadlines_for, first_deadline, meets_slo
from app.exceptions import EmptyTimelineError, EmptyWindowError, MetricUndefinedError, TraceError
from .schemas import (
    AggregateMetrics,
    BenefitParams,
    EvalWindow,
    IndicatorPenalty,
    LinearSecondsPenalty,
    MetricsReport,
    PenaltyFn,
    PercentileTable,
    RequestMetrics,
    TokenTimeline,
    TokensEquivalentPenalty,
    TraceRecord,
)

logger = logging.getLogger(__name__)

GoodputUnit = Literal["tokens", "requests"]


def _require_tokens(timeline: TokenTimeline):
    if not timeline.token_times:
        raise EmptyTimelineError(timeline.request_id)


def ttft(timeline: TokenTimeline) -> float:
    _require_tokens(timeline)
    return timeline.token_times[0] - timeline.arrival


def tbt_series(timeline: TokenTimeline) -> List[float]:
    _require_tokens(timeline)
    times = timeline.token_times
    return [current - previous for previous, current in zip(times, times[1:])]


def tpot(timeline: TokenTimeline) -> float:
    """Average time per output token, excluding the first one."""
    times = timeline.token_times
    if len(times) < 2:
        raise MetricUndefinedError(f"tpot undefined for request {timeline.request_id}")
    return (times[-1] - times[0]) / (len(times) - 1)


def e2e_latency(timeline: TokenTimeline) -> float:
    _require_tokens(timeline)
    return timeline.token_times[-1] - timeline.arrival


def max_lateness(timeline: TokenTimeline, policy: DeadlinePolicy) -> float:
    """Signed maximum of (generation time - deadline); negative when every token is early."""
    deadlines = deadlines_for(policy, timeline)
    return max(t - d for t, d in zip(timeline.relative_times(), deadlines))


def user_idle_latency(timeline: TokenTimeline, policy: DeadlinePolicy) -> float:
    return max(0.0, max_lateness(timeline, policy))


def pending_idle_latency(timeline: TokenTimeline, policy: DeadlinePolicy, end: float) -> float:
    """
    Idle latency of a request that has no token yet at ``end``: its first token
    is already at least this late.
    """
    return max(0.0, (end - timeline.arrival) - first_deadline(policy))


def default_penalty(policy: DeadlinePolicy, tokens_per_second: float) -> PenaltyFn:
    if isinstance(policy, ReadingSpeedPolicy):
        return TokensEquivalentPenalty(per_token_budget_s=policy.per_token_budget_s)
    return TokensEquivalentPenalty(per_token_budget_s=1.0 / tokens_per_second)


def resolve_params(params: BenefitParams, policy: DeadlinePolicy) -> BenefitParams:
    """Fill in the penalty function when the caller left it to the deadline policy."""
    if params.penalty is not None:
        return params
    return params.copy(update={"penalty": default_penalty(policy, settings.default_tokens_per_second)})


def penalty(fn: PenaltyFn, idle_latency: float) -> float:
    if idle_latency <= 0:
        return 0.0
    if isinstance(fn, TokensEquivalentPenalty):
        return idle_latency / fn.per_token_budget_s
    if isinstance(fn, LinearSecondsPenalty):
        return fn.scale * idle_latency
    if isinstance(fn, IndicatorPenalty):
        return fn.penalty_value if idle_latency > fn.threshold_s else 0.0
    raise TypeError(f"unknown penalty function {fn!r}")


def _benefit_of(n_tokens: int, idle_latency: float, params: BenefitParams) -> float:
    return n_tokens - params.alpha * penalty(params.penalty, idle_latency)


def benefit(timeline: TokenTimeline, policy: DeadlinePolicy, params: BenefitParams) -> float:
    """Tokens delivered minus the weighted idle-latency penalty; may be negative."""
    params = resolve_params(params, policy)
    return _benefit_of(timeline.n_tokens, user_idle_latency(timeline, policy), params)


def _window_idle_latency(timeline: TokenTimeline, policy: DeadlinePolicy, window: EvalWindow) -> float:
    if timeline.token_times:
        return user_idle_latency(timeline, policy)
    return pending_idle_latency(timeline, policy, window.end)


def _window_meets(timeline: TokenTimeline, policy: DeadlinePolicy) -> bool:
    return bool(timeline.token_times) and meets_slo(timeline, policy)


def goodput(window: EvalWindow, policy: DeadlinePolicy, unit: GoodputUnit = "tokens") -> float:
    """SLO-meeting output per second over the window; tokens by default, requests on demand."""
    good = 0
    for timeline in window.requests:
        if _window_meets(timeline, policy):
            good += timeline.n_tokens if unit == "tokens" else 1
    return good / window.length


def smooth_goodput(window: EvalWindow, policy: DeadlinePolicy, params: BenefitParams) -> float:
    params = resolve_params(params, policy)
    total = sum(
        _benefit_of(t.n_tokens, _window_idle_latency(t, policy, window), params)
        for t in window.requests
    )
    return total / window.length


def slo_attainment(window: EvalWindow, policy: DeadlinePolicy) -> float:
    if not window.requests:
        raise EmptyWindowError("slo attainment is undefined for a window without requests")
    met = sum(1 for t in window.requests if _window_meets(t, policy))
    return met / len(window.requests)


def percentile(values: List[float], q: float) -> float:
    """Nearest-rank percentile: the ceil(q*n)-th smallest value, 1-indexed."""
    if not values:
        raise ValueError("percentile of an empty list")
    if not 0 <= q <= 1:
        raise ValueError("q must lie in [0, 1]")
    ordered = sorted(values)
    rank = max(1, math.ceil(q * len(ordered)))
    return ordered[rank - 1]


def percentile_table(values: List[float]) -> PercentileTable | None:
    if not values:
        return
    return PercentileTable(
        p50=percentile(values, 0.5),
        p90=percentile(values, 0.9),
        p99=percentile(values, 0.99)
    )


def _request_metrics(
        timeline: TokenTimeline,
        window: EvalWindow,
        policy: DeadlinePolicy,
        params: BenefitParams
) -> RequestMetrics:
    idle = _window_idle_latency(timeline, policy, window)
    record = RequestMetrics(
        request_id=timeline.request_id,
        tokens=timeline.n_tokens,
        completed=timeline.completed,
        idle_latency=idle,
        benefit=_benefit_of(timeline.n_tokens, idle, params),
        met_slo=_window_meets(timeline, policy)
    )
    if timeline.token_times:
        record.ttft = ttft(timeline)
        record.lateness = max_lateness(timeline, policy)
        gaps = tbt_series(timeline)
        if gaps:
            record.max_tbt = max(gaps)
            record.tpot = tpot(timeline)
        if timeline.completed:
            record.e2e = e2e_latency(timeline)
    return record


def aggregate(
        records: List[RequestMetrics],
        tbts: List[float],
        window_s: float,
        unit: GoodputUnit = "tokens"
) -> AggregateMetrics:
    """Window-level figures recomputed from the per-request records."""
    if not records:
        raise EmptyWindowError("cannot report on a window without requests")
    tokens = sum(r.tokens for r in records)
    met = [r for r in records if r.met_slo]
    good = sum(r.tokens for r in met) if unit == "tokens" else len(met)
    ttfts = [r.ttft for r in records if r.ttft is not None]
    return AggregateMetrics(
        requests=len(records),
        tokens=tokens,
        window_s=window_s,
        throughput=tokens / window_s,
        goodput=good / window_s,
        goodput_unit=unit,
        smooth_goodput=sum(r.benefit for r in records) / window_s,
        slo_attainment=len(met) / len(records),
        mean_ttft=sum(ttfts) / len(ttfts) if ttfts else None,
        mean_idle_latency=sum(r.idle_latency for r in records) / len(records),
        negative_benefit_requests=sum(1 for r in records if r.benefit < 0),
        ttft_percentiles=percentile_table(ttfts),
        tbt_percentiles=percentile_table(tbts)
    )


def build_report(
        window: EvalWindow,
        policy: DeadlinePolicy,
        params: BenefitParams,
        unit: GoodputUnit = "tokens"
) -> MetricsReport:
    if not window.requests:
        raise EmptyWindowError("cannot report on a window without requests")
    params = resolve_params(params, policy)
    records = [_request_metrics(t, window, policy, params) for t in window.requests]
    tbts = [gap for t in window.requests if t.token_times for gap in tbt_series(t)]
    report = MetricsReport(
        requests=records,
        aggregates=aggregate(records, tbts, window.length, unit)
    )
    logger.debug(
        "Report over %d requests: throughput=%.3f smooth_goodput=%.3f",
        len(records), report.aggregates.throughput, report.aggregates.smooth_goodput
    )
    return report


def window_from_records(
        records: Iterable[TraceRecord],
        start: float,
        end: float,
        delivered: bool = True
) -> EvalWindow:
    """Requests arriving in [start, end), each cut to the tokens it had by ``end``."""
    timelines = [
        record.timeline(delivered).truncated(end)
        for record in records
        if start <= record.arrival_s < end
    ]
    return EvalWindow(start=start, end=end, requests=timelines)


def load_trace(path: Path | str) -> List[TraceRecord]:
    records = []
    with open(path, encoding="utf-8") as file:
        for number, line in enumerate(file, start=1):
            if not line.strip():
                continue
            try:
                records.append(TraceRecord.parse_obj(json.loads(line)))
            except (json.JSONDecodeError, ValidationError) as err:
                raise TraceError(str(err), line=number) from None
    return records


def dump_trace_record(record: TraceRecord) -> str:
    return json.dumps(record.dict(exclude_none=True), separators=(",", ":"))


def save_trace(path: Path | str, records: Iterable[TraceRecord]):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as file:
        for record in records:
            file.write(dump_trace_record(record) + "\n")


REQUEST_COLUMNS = list(RequestMetrics.__fields__)


def save_report(report: MetricsReport, json_path: Path | str, csv_path: Path | str):
    json_path, csv_path = Path(json_path), Path(csv_path)
    json_path.parent.mkdir(parents=True, exist_ok=True)
    json_path.write_text(report.json(indent=2), encoding="utf-8")

    with open(csv_path, "w", encoding="utf-8", newline="") as file:
        writer = csv.writer(file)
        writer.writerow(REQUEST_COLUMNS)
        for record in report.requests:
            row = record.dict()
            writer.writerow(["" if row[c] is None else row[c] for c in REQUEST_COLUMNS])
        for name, value in report.aggregates.dict().items():
            if isinstance(value, dict):
                for key, inner in value.items():
                    writer.writerow(["#agg", f"{name}.{key}", inner])
            else:
                writer.writerow(["#agg", name, "" if value is None else value])
