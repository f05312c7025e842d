from typing import List, Literal, Union

from pydantic import BaseModel, Field
from typing_extensions import Annotated

from app.metrics.schemas import TraceRecord


class TbtCapMode(BaseModel):
    type: Literal["tbt_cap"] = "tbt_cap"
    tbt_target_s: float = Field(..., gt=0)

    @property
    def hold(self) -> float:
        return self.tbt_target_s


class FixedRateMode(BaseModel):
    type: Literal["fixed_rate"] = "fixed_rate"
    per_token_s: float = Field(..., gt=0)

    @property
    def hold(self) -> float:
        return self.per_token_s


DelayMode = Annotated[Union[TbtCapMode, FixedRateMode], Field(discriminator="type")]


class DelayConfig(BaseModel):
    mode: DelayMode
    first_token_delayed: bool = False

    @property
    def hold(self) -> float:
        return self.mode.hold


class DelayRequest(BaseModel):
    records: List[TraceRecord]
    config: DelayConfig
