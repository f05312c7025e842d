from typing import List, Literal, Optional, Union

from pydantic import BaseModel, Field, validator
from typing_extensions import Annotated

from app.deadlines.schemas import DeadlinePolicy


def _check_times(times: List[float], arrival: float, field: str) -> List[float]:
    if times and times[0] < arrival:
        raise ValueError(f"{field} precede the arrival time")
    for previous, current in zip(times, times[1:]):
        if current < previous:
            raise ValueError(f"{field} must be non-decreasing")
    return times


class TokenTimeline(BaseModel):
    request_id: str
    arrival: float = Field(..., ge=0)
    token_times: List[float] = []
    completed: bool = True

    @validator("token_times")
    def ordered_after_arrival(cls, times, values):
        if "arrival" not in values:
            return times
        return _check_times(times, values["arrival"], "token_times")

    @property
    def n_tokens(self) -> int:
        return len(self.token_times)

    def relative_times(self) -> List[float]:
        return [t - self.arrival for t in self.token_times]

    def truncated(self, end: float) -> "TokenTimeline":
        kept = [t for t in self.token_times if t < end]
        return TokenTimeline(
            request_id=self.request_id,
            arrival=self.arrival,
            token_times=kept,
            completed=self.completed and len(kept) == len(self.token_times)
        )


class TraceRecord(BaseModel):
    """One request of a trace file, generated by the simulator or ingested from a real engine."""
    request_id: str
    arrival_s: float = Field(..., ge=0)
    token_times_s: List[float] = []
    prompt_len: int = Field(0, ge=0)
    completed: bool = True
    delivery_times_s: Optional[List[float]] = None

    @validator("token_times_s")
    def generation_after_arrival(cls, times, values):
        if "arrival_s" not in values:
            return times
        return _check_times(times, values["arrival_s"], "token_times_s")

    @validator("delivery_times_s")
    def delivery_after_generation(cls, times, values):
        if times is None or "token_times_s" not in values:
            return times
        generated = values["token_times_s"]
        if len(times) != len(generated):
            raise ValueError("delivery_times_s must have one entry per generated token")
        if any(release < made for release, made in zip(times, generated)):
            raise ValueError("a token cannot be delivered before it is generated")
        return _check_times(times, values["arrival_s"], "delivery_times_s")

    def timeline(self, delivered: bool = True) -> TokenTimeline:
        times = self.token_times_s
        if delivered and self.delivery_times_s is not None:
            times = self.delivery_times_s
        return TokenTimeline(
            request_id=self.request_id,
            arrival=self.arrival_s,
            token_times=times,
            completed=self.completed
        )


class LinearSecondsPenalty(BaseModel):
    type: Literal["linear_seconds"] = "linear_seconds"
    scale: float = Field(1.0, ge=0)


class TokensEquivalentPenalty(BaseModel):
    type: Literal["tokens_equivalent"] = "tokens_equivalent"
    per_token_budget_s: float = Field(..., gt=0)


class IndicatorPenalty(BaseModel):
    type: Literal["indicator"] = "indicator"
    threshold_s: float = Field(0.0, ge=0)
    penalty_value: float = Field(..., ge=0)


PenaltyFn = Annotated[
    Union[LinearSecondsPenalty, TokensEquivalentPenalty, IndicatorPenalty],
    Field(discriminator="type")
]


class BenefitParams(BaseModel):
    alpha: float = Field(5.0, ge=0)
    penalty: Optional[PenaltyFn] = None


class EvalWindow(BaseModel):
    start: float
    end: float
    requests: List[TokenTimeline] = []

    @validator("end")
    def non_degenerate(cls, end, values):
        if "start" in values and end <= values["start"]:
            raise ValueError("window end must be after its start")
        return end

    @validator("requests")
    def arrivals_inside(cls, requests, values):
        start, end = values.get("start"), values.get("end")
        if start is None or end is None:
            return requests
        for timeline in requests:
            if not start <= timeline.arrival < end:
                raise ValueError(f"request {timeline.request_id} arrived outside the window")
        return requests

    @property
    def length(self) -> float:
        return self.end - self.start


class PercentileTable(BaseModel):
    p50: float
    p90: float
    p99: float


class RequestMetrics(BaseModel):
    request_id: str
    tokens: int
    completed: bool
    ttft: Optional[float] = None
    tpot: Optional[float] = None
    e2e: Optional[float] = None
    max_tbt: Optional[float] = None
    lateness: Optional[float] = None
    idle_latency: float
    benefit: float
    met_slo: bool


class AggregateMetrics(BaseModel):
    requests: int
    tokens: int
    window_s: float
    throughput: float
    goodput: float
    goodput_unit: Literal["tokens", "requests"] = "tokens"
    smooth_goodput: float
    slo_attainment: float
    mean_ttft: Optional[float] = None
    mean_idle_latency: float
    negative_benefit_requests: int
    ttft_percentiles: Optional[PercentileTable] = None
    tbt_percentiles: Optional[PercentileTable] = None


class MetricsReport(BaseModel):
    requests: List[RequestMetrics]
    aggregates: AggregateMetrics


class ReportRequest(BaseModel):
    """
    Evaluate a trace over an explicit window

    **records**: trace records, as written by the simulator\n
    **start**, **end**: window bounds in seconds from the run start\n
    **policy**: deadline policy (tagged by ``type``)\n
    **benefit**: alpha and the idle-latency penalty
    """
    records: List[TraceRecord]
    start: float
    end: float
    policy: DeadlinePolicy
    benefit: BenefitParams = BenefitParams()
    goodput_unit: Literal["tokens", "requests"] = "tokens"

    @validator("end")
    def non_degenerate(cls, end, values):
        if "start" in values and end <= values["start"]:
            raise ValueError("window end must be after its start")
        return end
