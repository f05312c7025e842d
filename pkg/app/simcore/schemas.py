import enum
from dataclasses import dataclass, field
from typing import List, Tuple

from pydantic import BaseModel, Field

from app.metrics.schemas import TraceRecord
from app.workload.schemas import RequestSpec


class CostModel(BaseModel):
    """
    Affine surrogate of the batch latency of a GPU

    **base_s**: fixed cost of any iteration\n
    **prefill_per_token_s**: cost per prompt token processed\n
    **decode_per_seq_s**: cost per decoding sequence\n
    **chunk_overhead_s**: extra cost of a hybrid (decode + prefill chunk) batch
    """
    base_s: float = Field(0.01, gt=0)
    prefill_per_token_s: float = Field(0.0005, ge=0)
    decode_per_seq_s: float = Field(0.0005, ge=0)
    chunk_overhead_s: float = Field(0.0, ge=0)

    class Config:
        allow_mutation = False


class EngineLimits(BaseModel):
    max_batch_tokens: int = Field(4096, ge=1)
    max_running_seqs: int = Field(32, ge=1)
    kv_capacity_tokens: int = Field(65536, ge=1)

    class Config:
        allow_mutation = False


class EngineConfig(BaseModel):
    cost: CostModel = CostModel()
    limits: EngineLimits = EngineLimits()

    class Config:
        allow_mutation = False


class Phase(str, enum.Enum):
    WAITING = "waiting"
    PREFILLING = "prefilling"
    DECODING = "decoding"
    FINISHED = "finished"
    REJECTED = "rejected"


@dataclass(eq=False)
class RequestState:
    spec: RequestSpec
    phase: Phase = Phase.WAITING
    prefill_done: int = 0
    token_times: List[float] = field(default_factory=list)
    release_times: List[float] = field(default_factory=list)

    @property
    def request_id(self) -> str:
        return self.spec.request_id

    @property
    def sort_key(self) -> Tuple[float, str]:
        return self.spec.arrival_s, self.spec.request_id

    @property
    def tokens_emitted(self) -> int:
        return len(self.token_times)

    @property
    def remaining_prompt(self) -> int:
        return self.spec.prompt_len - self.prefill_done

    @property
    def remaining_output(self) -> int:
        return self.spec.output_len - self.tokens_emitted

    @property
    def kv_tokens(self) -> int:
        return self.prefill_done + self.tokens_emitted

    @property
    def kv_reservation(self) -> int:
        return self.spec.prompt_len + self.spec.output_len

    def emit(self, at: float):
        self.token_times.append(at)
        self.release_times.append(at)
        if self.tokens_emitted == self.spec.output_len:
            self.phase = Phase.FINISHED

    def to_record(self) -> TraceRecord:
        deferred = self.release_times != self.token_times
        return TraceRecord(
            request_id=self.spec.request_id,
            arrival_s=self.spec.arrival_s,
            token_times_s=list(self.token_times),
            prompt_len=self.spec.prompt_len,
            completed=self.phase is Phase.FINISHED,
            delivery_times_s=list(self.release_times) if deferred else None
        )


@dataclass(frozen=True)
class IterationRecord:
    start: float
    duration: float
    prefill_tokens: int
    decode_seqs: int
    kind: str
    prefill: Tuple[Tuple[str, int], ...] = ()
    decode: Tuple[str, ...] = ()

    @property
    def end(self) -> float:
        return self.start + self.duration


@dataclass(frozen=True)
class QueueSample:
    time: float
    waiting: int
    running: int


@dataclass
class SimTrace:
    states: List[RequestState]
    iterations: List[IterationRecord] = field(default_factory=list)
    queue_depth: List[QueueSample] = field(default_factory=list)
    decisions: list = field(default_factory=list)

    def records(self) -> List[TraceRecord]:
        return [state.to_record() for state in self.states]

    def state(self, request_id: str) -> RequestState:
        for state in self.states:
            if state.request_id == request_id:
                return state
        raise KeyError(request_id)
