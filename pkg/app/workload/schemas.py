import math
from typing import Literal, Optional, Union

import numpy as np
from pydantic import BaseModel, Field, validator
from typing_extensions import Annotated


class RequestSpec(BaseModel):
    request_id: str
    arrival_s: float = Field(..., ge=0)
    prompt_len: int = Field(..., ge=1)
    output_len: int = Field(..., ge=1)

    class Config:
        allow_mutation = False


class LengthRecord(BaseModel):
    prompt_len: int = Field(..., ge=1)
    output_len: int = Field(..., ge=1)


class ConstantLengths(BaseModel):
    kind: Literal["constant"] = "constant"
    value: int = Field(..., ge=1)

    @property
    def mean(self) -> float:
        return float(self.value)

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        return np.full(size, self.value, dtype=np.int64)


class UniformLengths(BaseModel):
    kind: Literal["uniform"] = "uniform"
    low: int = Field(..., ge=1)
    high: int = Field(..., ge=1)

    @validator("high")
    def ordered(cls, high, values):
        if "low" in values and high < values["low"]:
            raise ValueError("high must be >= low")
        return high

    @property
    def mean(self) -> float:
        return (self.low + self.high) / 2

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        return rng.integers(self.low, self.high, size=size, endpoint=True)


class ExponentialLengths(BaseModel):
    kind: Literal["exponential"] = "exponential"
    mean_len: float = Field(..., gt=0, alias="mean")

    class Config:
        allow_population_by_field_name = True

    @property
    def mean(self) -> float:
        return self.mean_len

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        return np.maximum(1, np.rint(rng.exponential(self.mean_len, size=size))).astype(np.int64)


class LognormalLengths(BaseModel):
    kind: Literal["lognormal"] = "lognormal"
    mean_len: float = Field(..., gt=0, alias="mean")
    sigma: float = Field(0.5, gt=0)

    class Config:
        allow_population_by_field_name = True

    @property
    def mean(self) -> float:
        return self.mean_len

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        mu = math.log(self.mean_len) - self.sigma ** 2 / 2
        draws = rng.lognormal(mu, self.sigma, size=size)
        return np.maximum(1, np.rint(draws)).astype(np.int64)


LengthDistribution = Annotated[
    Union[ConstantLengths, UniformLengths, ExponentialLengths, LognormalLengths],
    Field(discriminator="kind")
]


class SyntheticSource(BaseModel):
    type: Literal["synthetic"] = "synthetic"
    prompt_dist: LengthDistribution
    output_dist: LengthDistribution


class DatasetFileSource(BaseModel):
    type: Literal["dataset_file"] = "dataset_file"
    path: str


class ConcatenatedSource(BaseModel):
    type: Literal["concatenated"] = "concatenated"
    path: str
    target_mean_prompt_len: int = Field(1600, ge=1)


LengthSource = Annotated[
    Union[SyntheticSource, DatasetFileSource, ConcatenatedSource],
    Field(discriminator="type")
]


class WorkloadConfig(BaseModel):
    rate: float = Field(..., gt=0)
    count: int = Field(..., ge=1)
    seed: Optional[int] = None
    length_source: LengthSource = SyntheticSource(
        prompt_dist=UniformLengths(low=128, high=512),
        output_dist=UniformLengths(low=64, high=256)
    )
