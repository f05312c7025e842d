from typing import List, Literal, Optional

from pydantic import BaseModel, Field, root_validator, validator

from app.config import settings
from app.deadlines.schemas import DeadlinePolicy, ReadingSpeedPolicy
from app.delivery.schemas import DelayConfig
from app.metrics.schemas import BenefitParams
from app.schedulers.schemas import SchedulerPolicy, VllmLikeConfig
from app.simcore.schemas import EngineConfig
from app.workload.schemas import WorkloadConfig


class VariantConfig(BaseModel):
    name: str = Field(..., regex=r"^[A-Za-z0-9_.-]+$")
    scheduler: SchedulerPolicy = VllmLikeConfig()
    delivery: Optional[DelayConfig] = None


class WindowConfig(BaseModel):
    warmup_fraction: float = Field(default_factory=lambda: settings.warmup_fraction, ge=0, lt=1)
    drain_fraction: float = Field(default_factory=lambda: settings.drain_fraction, ge=0, lt=1)

    @root_validator(skip_on_failure=True)
    def leaves_a_window(cls, values):
        if values["warmup_fraction"] + values["drain_fraction"] >= 1:
            raise ValueError("warm-up and drain trimming leave no evaluation window")
        return values


class CapacityConfig(BaseModel):
    min_rate: float = Field(..., gt=0)
    max_rate: float = Field(..., gt=0)
    threshold: float = Field(0.9, gt=0, le=1)
    resolution: float = Field(default_factory=lambda: settings.capacity_resolution, gt=0)
    variant: Optional[str] = None

    @validator("max_rate")
    def bracket_ordered(cls, max_rate, values):
        if "min_rate" in values and max_rate <= values["min_rate"]:
            raise ValueError("max_rate must exceed min_rate")
        return max_rate


class ExperimentConfig(BaseModel):
    name: str = "experiment"
    seed: int = 0
    workload: WorkloadConfig
    engine: EngineConfig = EngineConfig()
    variants: List[VariantConfig] = Field(
        default_factory=lambda: [VariantConfig(name="vllm_like")], min_items=1
    )
    policy: DeadlinePolicy = ReadingSpeedPolicy(per_token_budget_s=1.0 / settings.default_tokens_per_second)
    benefit: BenefitParams = Field(default_factory=lambda: BenefitParams(alpha=settings.default_alpha))
    rates: Optional[List[float]] = None
    window: WindowConfig = Field(default_factory=WindowConfig)
    goodput_unit: Literal["tokens", "requests"] = "tokens"
    capacity: Optional[CapacityConfig] = None
    output_dir: str = Field(default_factory=lambda: settings.output_dir)

    @validator("variants")
    def unique_names(cls, variants):
        names = [v.name for v in variants]
        if len(set(names)) != len(names):
            raise ValueError("variant names must be unique")
        return variants

    @validator("rates")
    def positive_and_sorted(cls, rates):
        if rates is None:
            return rates
        if not rates:
            raise ValueError("rates must list at least one request rate")
        if any(rate <= 0 for rate in rates):
            raise ValueError("rates must be positive")
        if rates != sorted(rates):
            raise ValueError("rates must be sorted")
        return rates

    def sweep_rates(self) -> List[float]:
        return self.rates or [self.workload.rate]

    def workload_at(self, rate: float) -> WorkloadConfig:
        seed = self.workload.seed if self.workload.seed is not None else self.seed
        return self.workload.copy(update={"rate": rate, "seed": seed})

    def variant(self, name: str | None = None) -> VariantConfig:
        if name is None:
            return self.variants[0]
        for variant in self.variants:
            if variant.name == name:
                return variant
        raise KeyError(f"no variant named {name!r}")


class SweepRow(BaseModel):
    variant: str
    rate: float
    requests: Optional[int] = None
    tokens: Optional[int] = None
    throughput: Optional[float] = None
    goodput: Optional[float] = None
    smooth_goodput: Optional[float] = None
    slo_attainment: Optional[float] = None
    p99_tbt: Optional[float] = None
    mean_tpot: Optional[float] = None
    mean_ttft: Optional[float] = None
    mean_idle_latency: Optional[float] = None
    error: Optional[str] = None


class SweepResult(BaseModel):
    name: str
    output_dir: str
    rows: List[SweepRow]
    artifacts: List[str] = []

    def row(self, variant: str, rate: float) -> SweepRow:
        for row in self.rows:
            if row.variant == variant and row.rate == rate:
                return row
        raise KeyError((variant, rate))


class CapacityProbe(BaseModel):
    rate: float
    attainment: float


class CapacityResult(BaseModel):
    variant: str
    threshold: float
    rate: float
    probes: List[CapacityProbe]


class CapacityRequest(BaseModel):
    config: ExperimentConfig
    threshold: Optional[float] = Field(None, gt=0, le=1)
    variant: Optional[str] = None
