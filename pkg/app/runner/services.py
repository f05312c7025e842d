import csv
import json
import math
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Sequence, Tuple

from fastapi import Depends

from app.config import Settings, get_settings
from app.deadlines.services import deadlines_for
from app.delivery.services import delay_records
from app.exceptions import ConfigError, EmptyWindowError, InfeasibleBracketError
from app.metrics.schemas import EvalWindow, MetricsReport, TraceRecord
from app.metrics.services import build_report, save_report, save_trace, tbt_series, window_from_records
from app.schedulers.services import build_scheduler
from app.simcore.schemas import SimTrace
from app.simcore.services import run, save_iterations
from app.workload.schemas import RequestSpec
from app.workload.services import generate, save_workload
from .schemas import (
    CapacityProbe,
    CapacityResult,
    ExperimentConfig,
    SweepResult,
    SweepRow,
    VariantConfig,
)

logger = logging.getLogger(__name__)

SUMMARY_COLUMNS = list(SweepRow.__fields__)
FIGURE_METRICS = ["throughput", "p99_tbt", "mean_tpot", "mean_ttft", "smooth_goodput", "goodput"]


@dataclass
class CellResult:
    workload: List[RequestSpec]
    trace: SimTrace
    records: List[TraceRecord]
    window: EvalWindow
    report: MetricsReport


def load_period(arrivals: Sequence[float], rate: float | None = None) -> float:
    """End of the open-loop arrival process: last arrival plus one mean gap."""
    if not arrivals:
        raise EmptyWindowError("no requests to evaluate")
    last = max(arrivals)
    gap = 1.0 / rate if rate else last / len(arrivals)
    return last + gap


def evaluation_window(config: ExperimentConfig, records: Sequence[TraceRecord], horizon: float) -> EvalWindow:
    start = config.window.warmup_fraction * horizon
    end = (1.0 - config.window.drain_fraction) * horizon
    if end <= start:
        raise EmptyWindowError(f"evaluation window [{start}, {end}) is empty")
    return window_from_records(records, start, end)


def trace_window(config: ExperimentConfig, records: Sequence[TraceRecord]) -> EvalWindow:
    """
    Default window of an ingested trace. A batch trace, whose requests all arrive at
    one instant, has no arrival period to trim and is evaluated up to its last token.
    """
    arrivals = [r.arrival_s for r in records]
    if not arrivals:
        raise EmptyWindowError("no requests to evaluate")
    first, last = min(arrivals), max(arrivals)
    if last > first:
        return evaluation_window(config, records, load_period(arrivals))
    final = max((t for r in records for t in r.timeline().token_times), default=first)
    if final <= first:
        raise EmptyWindowError("trace has no token after its arrival instant")
    return window_from_records(records, first, math.nextafter(final, math.inf))


def simulate_cell(config: ExperimentConfig, variant: VariantConfig, rate: float) -> CellResult:
    workload = generate(config.workload_at(rate))
    trace = run(workload, config.engine, build_scheduler(variant.scheduler))
    records = trace.records()
    if variant.delivery is not None:
        records = delay_records(records, variant.delivery)
    horizon = load_period([spec.arrival_s for spec in workload], rate)
    window = evaluation_window(config, records, horizon)
    report = build_report(window, config.policy, config.benefit, config.goodput_unit)
    return CellResult(workload, trace, records, window, report)


def summary_row(variant: str, rate: float, report: MetricsReport) -> SweepRow:
    aggregates = report.aggregates
    tpots = [r.tpot for r in report.requests if r.tpot is not None]
    return SweepRow(
        variant=variant,
        rate=rate,
        requests=aggregates.requests,
        tokens=aggregates.tokens,
        throughput=aggregates.throughput,
        goodput=aggregates.goodput,
        smooth_goodput=aggregates.smooth_goodput,
        slo_attainment=aggregates.slo_attainment,
        p99_tbt=aggregates.tbt_percentiles.p99 if aggregates.tbt_percentiles else None,
        mean_tpot=sum(tpots) / len(tpots) if tpots else None,
        mean_ttft=aggregates.mean_ttft,
        mean_idle_latency=aggregates.mean_idle_latency
    )


def cell_dir(output_dir: Path, variant: str, rate: float) -> Path:
    return output_dir / variant / f"rate_{rate:g}"


def _write_token_timeline(path: Path, cell: CellResult, config: ExperimentConfig):
    generated = {r.request_id: r.timeline(delivered=False) for r in cell.records}
    with open(path, "w", encoding="utf-8", newline="") as file:
        writer = csv.writer(file)
        writer.writerow(["request_id", "token_index", "generated_s", "delivered_s", "deadline_s"])
        for timeline in cell.window.requests:
            if not timeline.token_times:
                continue
            made = generated[timeline.request_id].relative_times()
            deadlines = deadlines_for(config.policy, timeline)
            for index, (delivered, deadline) in enumerate(zip(timeline.relative_times(), deadlines), start=1):
                writer.writerow([timeline.request_id, index, made[index - 1], delivered, deadline])


def _write_tbt_cdf(path: Path, cell: CellResult):
    series = {
        "generated": [r.timeline(delivered=False) for r in cell.records],
        "delivered": [r.timeline(delivered=True) for r in cell.records],
    }
    with open(path, "w", encoding="utf-8", newline="") as file:
        writer = csv.writer(file)
        writer.writerow(["timeline", "tbt_s", "cdf"])
        for name, timelines in series.items():
            gaps = sorted(gap for t in timelines if t.token_times for gap in tbt_series(t))
            for rank, gap in enumerate(gaps, start=1):
                writer.writerow([name, gap, rank / len(gaps)])


def write_cell(directory: Path, cell: CellResult, config: ExperimentConfig) -> List[Path]:
    directory.mkdir(parents=True, exist_ok=True)
    paths = {
        "workload": directory / "workload.jsonl",
        "trace": directory / "trace.jsonl",
        "iterations": directory / "iterations.csv",
        "report_json": directory / "report.json",
        "report_csv": directory / "report.csv",
        "token_timeline": directory / "token_timeline.csv",
        "tbt_cdf": directory / "tbt_cdf.csv",
    }
    save_workload(paths["workload"], cell.workload)
    save_trace(paths["trace"], cell.records)
    save_iterations(paths["iterations"], cell.trace.iterations)
    save_report(cell.report, paths["report_json"], paths["report_csv"])
    _write_token_timeline(paths["token_timeline"], cell, config)
    _write_tbt_cdf(paths["tbt_cdf"], cell)
    return list(paths.values())


def run_cell(config: ExperimentConfig, variant_name: str, rate: float) -> Tuple[SweepRow, List[str]]:
    output_dir = Path(config.output_dir)
    variant = config.variant(variant_name)
    logger.info("Running %s at %g req/s", variant.name, rate)
    try:
        cell = simulate_cell(config, variant, rate)
        paths = write_cell(cell_dir(output_dir, variant.name, rate), cell, config)
    except Exception as err:
        logger.exception("Cell %s at %g req/s failed", variant.name, rate)
        return SweepRow(variant=variant.name, rate=rate, error=f"{type(err).__name__}: {err}"), []
    artifacts = [path.relative_to(output_dir).as_posix() for path in paths]
    return summary_row(variant.name, rate, cell.report), artifacts


def _run_cell_job(job: Tuple[ExperimentConfig, str, float]) -> Tuple[SweepRow, List[str]]:
    return run_cell(*job)


def _write_rows(path: Path, rows: Sequence[SweepRow]):
    with open(path, "w", encoding="utf-8", newline="") as file:
        writer = csv.writer(file)
        writer.writerow(SUMMARY_COLUMNS)
        for row in rows:
            values = row.dict()
            writer.writerow(["" if values[c] is None else values[c] for c in SUMMARY_COLUMNS])


def _write_rate_figure(path: Path, rows: Sequence[SweepRow], variants: Sequence[str]):
    """Rate-vs-metric table, one column per (variant, metric)."""
    by_cell: Dict[Tuple[str, float], SweepRow] = {(r.variant, r.rate): r for r in rows}
    rates = sorted({r.rate for r in rows})
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as file:
        writer = csv.writer(file)
        writer.writerow(["rate"] + [f"{v}.{m}" for v in variants for m in FIGURE_METRICS])
        for rate in rates:
            line = [rate]
            for variant in variants:
                row = by_cell.get((variant, rate))
                for metric in FIGURE_METRICS:
                    value = getattr(row, metric) if row is not None else None
                    line.append("" if value is None else value)
            writer.writerow(line)


def save_capacity(config: ExperimentConfig, result: CapacityResult) -> List[str]:
    """Writes capacity.json and a manifest of the search into the output directory."""
    output_dir = Path(config.output_dir)
    output_dir.mkdir(parents=True, exist_ok=True)
    (output_dir / "capacity.json").write_text(result.json(indent=2), encoding="utf-8")
    artifacts = ["capacity.json", "manifest.json"]
    manifest = {
        "name": config.name,
        "config": json.loads(config.json()),
        "artifacts": artifacts,
        "capacity": json.loads(result.json()),
    }
    (output_dir / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True), encoding="utf-8")
    logger.info("Capacity of %s is %.4f req/s, written to %s", result.variant, result.rate, output_dir)
    return artifacts


class ExperimentService:
    def __init__(self, settings: Settings = Depends(get_settings)):
        self.settings = settings

    def run_experiment(self, config: ExperimentConfig) -> SweepResult:
        output_dir = Path(config.output_dir)
        output_dir.mkdir(parents=True, exist_ok=True)
        jobs = [(config, variant.name, rate) for variant in config.variants for rate in config.sweep_rates()]

        if self.settings.sweep_workers > 1 and len(jobs) > 1:
            with ProcessPoolExecutor(max_workers=self.settings.sweep_workers) as pool:
                outcomes = list(pool.map(_run_cell_job, jobs))
        else:
            outcomes = [_run_cell_job(job) for job in jobs]

        rows = [row for row, _ in outcomes]
        artifacts = [path for _, paths in outcomes for path in paths]

        _write_rows(output_dir / "summary.csv", rows)
        _write_rate_figure(output_dir / "figures" / "rate_sweep.csv", rows, [v.name for v in config.variants])
        artifacts += ["summary.csv", "figures/rate_sweep.csv", "manifest.json"]

        manifest = {
            "name": config.name,
            "config": json.loads(config.json()),
            "artifacts": sorted(artifacts),
            "failed_cells": [{"variant": r.variant, "rate": r.rate, "error": r.error} for r in rows if r.error],
        }
        (output_dir / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True), encoding="utf-8")
        logger.info("Experiment %s wrote %d cells to %s", config.name, len(rows), output_dir)
        return SweepResult(name=config.name, output_dir=str(output_dir), rows=rows, artifacts=sorted(artifacts))

    @staticmethod
    def attainment(config: ExperimentConfig, variant: VariantConfig, rate: float) -> float:
        return simulate_cell(config, variant, rate).report.aggregates.slo_attainment

    def capacity_search(
            self,
            config: ExperimentConfig,
            threshold: float | None = None,
            variant_name: str | None = None
    ) -> CapacityResult:
        """
        Largest request rate whose SLO attainment stays at or above ``threshold``,
        found by bisection; every probe is a full seeded simulation.
        """
        if config.capacity is None:
            raise InfeasibleBracketError("capacity search needs a capacity bracket in the config")
        bracket = config.capacity
        threshold = threshold if threshold is not None else bracket.threshold
        if not 0 < threshold <= 1:
            raise ConfigError("threshold must lie in (0, 1]")
        variant = config.variant(variant_name or bracket.variant)
        probes: List[CapacityProbe] = []

        def probe(rate: float) -> float:
            value = self.attainment(config, variant, rate)
            probes.append(CapacityProbe(rate=rate, attainment=value))
            logger.info("Capacity probe %s at %.4f req/s: attainment %.4f", variant.name, rate, value)
            return value

        low, high = bracket.min_rate, bracket.max_rate
        if probe(low) < threshold:
            raise InfeasibleBracketError(
                f"infeasible bracket: attainment at {low} req/s is already below {threshold}"
            )
        if probe(high) >= threshold:
            return CapacityResult(variant=variant.name, threshold=threshold, rate=high, probes=probes)

        while high - low > bracket.resolution:
            middle = (low + high) / 2
            if probe(middle) >= threshold:
                low = middle
            else:
                high = middle
        return CapacityResult(variant=variant.name, threshold=threshold, rate=low, probes=probes)

    @staticmethod
    def evaluate_trace(
            config: ExperimentConfig,
            records: Sequence[TraceRecord],
            start: float | None = None,
            end: float | None = None
    ) -> MetricsReport:
        """Metrics of an existing trace; the window defaults to the trimmed arrival period."""
        if start is None or end is None:
            window = trace_window(config, records)
            start = window.start if start is None else start
            end = window.end if end is None else end
        window = window_from_records(records, start, end)
        return build_report(window, config.policy, config.benefit, config.goodput_unit)

