from typing import List, Literal, Union

from pydantic import BaseModel, Field, root_validator, validator
from typing_extensions import Annotated

# Deadlines in seconds, one per output token, measured from the request's arrival.
DeadlineSeries = List[float]


class BasePolicySchema(BaseModel):
    class Config:
        allow_mutation = False
        extra = "forbid"


class TtftTbtPolicy(BasePolicySchema):
    type: Literal["ttft_tbt"] = "ttft_tbt"
    ttft_s: float = Field(..., gt=0)
    tbt_s: float = Field(..., gt=0)


class EndToEndPolicy(BasePolicySchema):
    type: Literal["end_to_end"] = "end_to_end"
    e2e_s: float = Field(..., gt=0)


class ReadingSpeedPolicy(BasePolicySchema):
    """
    Token-level deadlines paced by the user's reading speed

    **per_token_budget_s**: seconds per token, the reciprocal of tokens/second\n
    **first_token_allowance_s**: deadline of the first token, defaults to one budget
    """
    type: Literal["reading_speed"] = "reading_speed"
    per_token_budget_s: float = Field(..., gt=0)
    first_token_allowance_s: float | None = Field(None, gt=0)

    @root_validator(pre=True)
    def from_tokens_per_second(cls, values):
        values = dict(values)
        tokens_per_second = values.pop("tokens_per_second", None)
        if tokens_per_second is not None:
            if tokens_per_second <= 0:
                raise ValueError("tokens_per_second must be positive")
            values.setdefault("per_token_budget_s", 1.0 / tokens_per_second)
        return values

    @validator("first_token_allowance_s", always=True)
    def default_allowance(cls, value, values):
        if value is None:
            return values.get("per_token_budget_s")
        return value

    @property
    def tokens_per_second(self) -> float:
        return 1.0 / self.per_token_budget_s


DeadlinePolicy = Annotated[
    Union[TtftTbtPolicy, EndToEndPolicy, ReadingSpeedPolicy],
    Field(discriminator="type")
]
