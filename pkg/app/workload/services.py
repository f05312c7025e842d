import json
import logging
from pathlib import Path
from typing import Iterable, List, Tuple

import numpy as np
from pydantic import ValidationError

from app.exceptions import WorkloadError
from .schemas import (
    ConcatenatedSource,
    DatasetFileSource,
    LengthRecord,
    RequestSpec,
    SyntheticSource,
    WorkloadConfig,
)

logger = logging.getLogger(__name__)

# Items this much longer than the target are passed through instead of concatenated.
PASS_THROUGH_FACTOR = 4


def request_id(index: int) -> str:
    return f"req-{index:05d}"


def _read_jsonl(path: Path | str, model):
    try:
        file = open(path, encoding="utf-8")
    except OSError as err:
        raise WorkloadError(f"cannot read {path}: {err.strerror}") from None
    items = []
    with file:
        for number, line in enumerate(file, start=1):
            if not line.strip():
                continue
            try:
                items.append(model.parse_obj(json.loads(line)))
            except (json.JSONDecodeError, ValidationError) as err:
                raise WorkloadError(f"malformed record in {path}: {err}", line=number) from None
    return items


def load_dataset(path: Path | str) -> List[LengthRecord]:
    records = _read_jsonl(path, LengthRecord)
    if not records:
        raise WorkloadError(f"dataset {path} is empty")
    return records


def concatenate_to_length(
        records: List[LengthRecord],
        target_mean: int,
        seed: int | None = None,
        count: int | None = None,
        rng: np.random.Generator | None = None
) -> List[Tuple[int, int]]:
    """
    Build long prompts by concatenating randomly drawn dataset items until the
    running prompt length first reaches ``target_mean``.
    The output length of a concatenated prompt is the one of its last item.
    """
    if not records:
        raise WorkloadError("cannot concatenate an empty dataset")
    rng = rng if rng is not None else np.random.default_rng(seed)
    count = count if count is not None else len(records)

    if all(r.prompt_len > PASS_THROUGH_FACTOR * target_mean for r in records):
        logger.warning(
            "Every dataset item is longer than %dx the target of %d tokens, passing items through",
            PASS_THROUGH_FACTOR, target_mean
        )
        picks = rng.integers(0, len(records), size=count)
        return [(records[i].prompt_len, records[i].output_len) for i in picks]

    samples = []
    for _ in range(count):
        prompt_len = 0
        output_len = 0
        while prompt_len < target_mean:
            item = records[rng.integers(0, len(records))]
            prompt_len += item.prompt_len
            output_len = item.output_len
        samples.append((prompt_len, output_len))
    return samples


def _lengths(config: WorkloadConfig, rng: np.random.Generator) -> List[Tuple[int, int]]:
    source = config.length_source
    if isinstance(source, SyntheticSource):
        prompts = source.prompt_dist.sample(rng, config.count)
        outputs = source.output_dist.sample(rng, config.count)
        return [(int(p), int(o)) for p, o in zip(prompts, outputs)]

    records = load_dataset(source.path)
    if isinstance(source, ConcatenatedSource):
        return concatenate_to_length(
            records, source.target_mean_prompt_len, count=config.count, rng=rng
        )
    if isinstance(source, DatasetFileSource):
        picks = rng.integers(0, len(records), size=config.count)
        return [(records[i].prompt_len, records[i].output_len) for i in picks]
    raise WorkloadError(f"unknown length source {source!r}")


def generate(config: WorkloadConfig) -> List[RequestSpec]:
    """
    Poisson arrivals with seeded lengths.

    Arrivals are the standard exponential stream scaled by 1/rate, and lengths
    are drawn after them, so one seed yields the same requests at every rate.
    """
    rng = np.random.default_rng(config.seed)
    arrivals = np.cumsum(rng.standard_exponential(config.count) / config.rate)
    lengths = _lengths(config, rng)
    workload = [
        RequestSpec(
            request_id=request_id(i),
            arrival_s=float(arrival),
            prompt_len=prompt_len,
            output_len=output_len
        )
        for i, (arrival, (prompt_len, output_len)) in enumerate(zip(arrivals, lengths))
    ]
    logger.info(
        "Generated %d requests at %.3f req/s (seed=%s)", len(workload), config.rate, config.seed
    )
    return workload


def load_workload(path: Path | str) -> List[RequestSpec]:
    specs = _read_jsonl(path, RequestSpec)
    return sorted(specs, key=lambda s: (s.arrival_s, s.request_id))


def save_workload(path: Path | str, specs: Iterable[RequestSpec]):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as file:
        for spec in specs:
            file.write(json.dumps(spec.dict(), separators=(",", ":")) + "\n")
