import logging
from dataclasses import dataclass, field
from typing import Iterable, List, Literal, Tuple, Union

from app.simcore.schemas import EngineConfig, RequestState
from app.simcore.services import Scheduler, plan_duration
from app.workload.schemas import RequestSpec
from .schemas import (
    BatchPlan,
    ChunkedPrefillConfig,
    DecodePreponeConfig,
    DeferredRelease,
    PrefillItem,
    QueueState,
    SchedulerPolicy,
    VllmLikeConfig,
)

logger = logging.getLogger(__name__)


def _can_admit(queue: QueueState, state: RequestState, seqs: int = 0, kv: int = 0) -> bool:
    limits = queue.engine.limits
    if len(queue.running) + seqs + 1 > limits.max_running_seqs:
        return False
    return queue.kv_reserved + kv + state.kv_reservation <= limits.kv_capacity_tokens


def full_prefill_targets(queue: QueueState) -> List[RequestState]:
    """Waiting requests, in FCFS order, whose whole prompts fit in one batch; stops at the first misfit."""
    budget = queue.engine.limits.max_batch_tokens
    targets = []
    kv = 0
    for state in queue.waiting:
        if state.spec.prompt_len > budget or not _can_admit(queue, state, len(targets), kv):
            break
        targets.append(state)
        budget -= state.spec.prompt_len
        kv += state.kv_reservation
    return targets


def _prefill_plan(targets: Iterable[RequestState]) -> BatchPlan:
    return BatchPlan(
        prefill=tuple(PrefillItem(s.request_id, s.remaining_prompt) for s in targets),
        kind="prefill"
    )


def _decode_plan(queue: QueueState, kind: str = "decode") -> BatchPlan:
    limits = queue.engine.limits
    members = queue.decoding[:min(limits.max_running_seqs, limits.max_batch_tokens)]
    if not members:
        return BatchPlan()
    return BatchPlan(decode=tuple(s.request_id for s in members), kind=kind)


def next_batch_vllm(queue: QueueState) -> BatchPlan:
    """Prefill-prioritizing: waiting prompts preempt the ongoing decodes whenever they fit."""
    targets = full_prefill_targets(queue)
    if targets:
        return _prefill_plan(targets)
    return _decode_plan(queue)


def next_batch_chunked(queue: QueueState, chunk_tokens: int) -> BatchPlan:
    decode = _decode_plan(queue).decode
    room = queue.engine.limits.max_batch_tokens - len(decode)

    head = None
    if queue.prefilling:
        head = queue.prefilling[0]
    elif queue.waiting and _can_admit(queue, queue.waiting[0]):
        head = queue.waiting[0]

    prefill = ()
    if head is not None and room > 0:
        prefill = (PrefillItem(head.request_id, min(chunk_tokens, head.remaining_prompt, room)),)

    if prefill and decode:
        kind = "hybrid"
    elif prefill:
        kind = "prefill"
    elif decode:
        kind = "decode"
    else:
        kind = "idle"
    return BatchPlan(prefill=prefill, decode=decode, kind=kind)


@dataclass
class PreponeEpisode:
    """Decode iterations pulled ahead of a pending prefill, and the tokens they produced."""
    targets: Tuple[str, ...]
    iterations: int
    done: int = 0
    preponed: List[Tuple[RequestState, int, int]] = field(default_factory=list)


def next_batch_prepone(
        queue: QueueState,
        n: int,
        t_delay: Union[Literal["auto"], float],
        episode: PreponeEpisode | None = None
) -> Tuple[BatchPlan, PreponeEpisode | None]:
    if episode is None:
        targets = full_prefill_targets(queue)
        if not targets:
            return _decode_plan(queue), None
        decoding = queue.decoding
        if not decoding:
            return _prefill_plan(targets), None
        episode = PreponeEpisode(
            targets=tuple(s.request_id for s in targets),
            iterations=min(n, max(s.remaining_output for s in decoding))
        )

    if episode.done < episode.iterations and queue.decoding:
        plan = _decode_plan(queue, kind="prepone")
        episode.done += 1
        for state in queue.decoding[:plan.decode_seqs]:
            # the token this iteration produces lands at index tokens_emitted
            episode.preponed.append((state, state.tokens_emitted, episode.done))
        return plan, episode

    waiting = {s.request_id: s for s in queue.waiting}
    plan = _prefill_plan(waiting[i] for i in episode.targets if i in waiting)
    if plan.is_empty:
        return next_batch_vllm(queue), None
    duration = plan_duration(plan, queue.engine)
    prefill_end = queue.now + duration
    delay = duration / (n + 1) if t_delay == "auto" else t_delay
    releases = tuple(
        DeferredRelease(
            request_id=state.request_id,
            token_index=index,
            release_s=min(state.token_times[index] + k * delay, prefill_end)
        )
        for state, index, k in episode.preponed
    )
    return BatchPlan(prefill=plan.prefill, releases=releases, kind="prefill"), None


class VllmLikeScheduler:
    name = "vllm_like"

    def admissible(self, spec: RequestSpec, engine: EngineConfig) -> bool:
        limits = engine.limits
        return (
            spec.prompt_len <= limits.max_batch_tokens
            and spec.prompt_len + spec.output_len <= limits.kv_capacity_tokens
        )

    def next_batch(self, queue: QueueState) -> BatchPlan:
        return next_batch_vllm(queue)


class ChunkedPrefillScheduler:
    name = "chunked_prefill"

    def __init__(self, chunk_tokens: int):
        self.chunk_tokens = chunk_tokens

    def admissible(self, spec: RequestSpec, engine: EngineConfig) -> bool:
        return spec.prompt_len + spec.output_len <= engine.limits.kv_capacity_tokens

    def next_batch(self, queue: QueueState) -> BatchPlan:
        return next_batch_chunked(queue, self.chunk_tokens)


class DecodePreponeScheduler(VllmLikeScheduler):
    name = "decode_prepone"

    def __init__(self, prepone_tokens: int, t_delay: Union[Literal["auto"], float] = "auto"):
        self.prepone_tokens = prepone_tokens
        self.t_delay = t_delay
        self.episode: PreponeEpisode | None = None

    def next_batch(self, queue: QueueState) -> BatchPlan:
        plan, self.episode = next_batch_prepone(queue, self.prepone_tokens, self.t_delay, self.episode)
        return plan


class ReplayScheduler:
    """Re-issues a recorded decision log; release directives are not replayed."""
    name = "replay"

    def __init__(self, plans: Iterable[BatchPlan]):
        self.plans = [BatchPlan(prefill=p.prefill, decode=p.decode, kind=p.kind) for p in plans]
        self.position = 0
        self.known = {request_id for plan in self.plans for request_id in plan.members}

    def admissible(self, spec: RequestSpec, engine: EngineConfig) -> bool:
        return spec.request_id in self.known

    def next_batch(self, queue: QueueState) -> BatchPlan:
        if self.position >= len(self.plans):
            return BatchPlan()
        plan = self.plans[self.position]
        present = {s.request_id for s in queue.waiting} | {s.request_id for s in queue.running}
        if any(request_id not in present for request_id in plan.members):
            # members still on their way: idle until the next arrival
            return BatchPlan()
        self.position += 1
        return plan


def build_scheduler(policy: SchedulerPolicy) -> Scheduler:
    if isinstance(policy, VllmLikeConfig):
        return VllmLikeScheduler()
    if isinstance(policy, ChunkedPrefillConfig):
        return ChunkedPrefillScheduler(policy.chunk_tokens)
    if isinstance(policy, DecodePreponeConfig):
        return DecodePreponeScheduler(policy.prepone_tokens, policy.t_delay_s)
    raise TypeError(f"unknown scheduler policy {policy!r}")
