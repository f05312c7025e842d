from dataclasses import dataclass
from typing import List, Literal, Sequence, Tuple, Union

from pydantic import BaseModel, Field, validator
from typing_extensions import Annotated

from app.simcore.schemas import EngineConfig, Phase, RequestState


class VllmLikeConfig(BaseModel):
    type: Literal["vllm_like"] = "vllm_like"


class ChunkedPrefillConfig(BaseModel):
    type: Literal["chunked_prefill"] = "chunked_prefill"
    chunk_tokens: int = Field(512, ge=1)


class DecodePreponeConfig(BaseModel):
    type: Literal["decode_prepone"] = "decode_prepone"
    prepone_tokens: int = Field(2, ge=1)
    t_delay_s: Union[Literal["auto"], float] = "auto"

    class Config:
        smart_union = True

    @validator("t_delay_s")
    def non_negative_delay(cls, value):
        if value != "auto" and value < 0:
            raise ValueError("t_delay_s must be >= 0 or \"auto\"")
        return value


SchedulerPolicy = Annotated[
    Union[VllmLikeConfig, ChunkedPrefillConfig, DecodePreponeConfig],
    Field(discriminator="type")
]


@dataclass(frozen=True)
class PrefillItem:
    request_id: str
    tokens: int


@dataclass(frozen=True)
class DeferredRelease:
    request_id: str
    token_index: int
    release_s: float


@dataclass(frozen=True)
class BatchPlan:
    prefill: Tuple[PrefillItem, ...] = ()
    decode: Tuple[str, ...] = ()
    releases: Tuple[DeferredRelease, ...] = ()
    kind: str = "idle"

    @property
    def prefill_tokens(self) -> int:
        return sum(item.tokens for item in self.prefill)

    @property
    def decode_seqs(self) -> int:
        return len(self.decode)

    @property
    def is_empty(self) -> bool:
        return not self.prefill and not self.decode

    @property
    def members(self) -> List[str]:
        return [item.request_id for item in self.prefill] + list(self.decode)


@dataclass
class QueueState:
    """What a scheduler sees between two iterations; ``waiting`` is in FCFS order."""
    now: float
    waiting: Sequence[RequestState]
    running: Sequence[RequestState]
    engine: EngineConfig

    @property
    def decoding(self) -> List[RequestState]:
        return [s for s in self.running if s.phase is Phase.DECODING]

    @property
    def prefilling(self) -> List[RequestState]:
        return [s for s in self.running if s.phase is Phase.PREFILLING]

    @property
    def kv_reserved(self) -> int:
        return sum(s.kv_reservation for s in self.running)
