import csv
import logging
from pathlib import Path
from typing import List, Protocol, Sequence

from sortedcontainers import SortedKeyList

from app.exceptions import SchedulingError
from app.schedulers.schemas import BatchPlan, PrefillItem, QueueState
from app.workload.schemas import RequestSpec
from .schemas import EngineConfig, IterationRecord, Phase, QueueSample, RequestState, SimTrace

logger = logging.getLogger(__name__)

ITERATION_COLUMNS = ["start_s", "duration_s", "prefill_tokens", "decode_seqs", "kind", "prefill", "decode"]


class Scheduler(Protocol):
    name: str

    def admissible(self, spec: RequestSpec, engine: EngineConfig) -> bool:
        ...

    def next_batch(self, queue: QueueState) -> BatchPlan:
        ...


def iteration_time(
        prefill_tokens: int,
        decode_seqs: int,
        engine: EngineConfig,
        hybrid: bool = False
) -> float:
    cost = engine.cost
    duration = cost.base_s + cost.prefill_per_token_s * prefill_tokens + cost.decode_per_seq_s * decode_seqs
    if hybrid:
        duration += cost.chunk_overhead_s
    return duration


def plan_duration(plan: BatchPlan, engine: EngineConfig) -> float:
    return iteration_time(plan.prefill_tokens, plan.decode_seqs, engine, hybrid=plan.kind == "hybrid")


class Simulator:
    """
    Iteration-level continuous batching engine driven by virtual time.

    Between two iterations the arrivals up to the current time are admitted to the
    waiting queue, the scheduler forms the next batch and the clock advances by the
    batch's cost. Tokens are stamped at the end of the iteration that produced them;
    a request's first token comes out of the iteration that completes its prefill.
    """

    def __init__(self, workload: Sequence[RequestSpec], engine: EngineConfig, scheduler: Scheduler):
        self.engine = engine
        self.scheduler = scheduler
        self.states = [
            RequestState(spec)
            for spec in sorted(workload, key=lambda s: (s.arrival_s, s.request_id))
        ]
        self.clock = 0.0
        self.waiting = SortedKeyList(key=lambda s: s.sort_key)
        self.running = SortedKeyList(key=lambda s: s.sort_key)
        self.trace = SimTrace(states=self.states)
        self._by_id = {s.request_id: s for s in self.states}
        self._next_arrival = 0
        self._done = 0

    def _admit_arrivals(self):
        while self._next_arrival < len(self.states):
            state = self.states[self._next_arrival]
            if state.spec.arrival_s > self.clock:
                break
            self._next_arrival += 1
            if self.scheduler.admissible(state.spec, self.engine):
                self.waiting.add(state)
            else:
                state.phase = Phase.REJECTED
                self._done += 1
                logger.warning(
                    "Request %s (prompt=%d, output=%d) can never be scheduled by %s, rejecting it",
                    state.request_id, state.spec.prompt_len, state.spec.output_len, self.scheduler.name
                )

    def _fail(self, plan: BatchPlan, reason: str):
        raise SchedulingError(
            f"{self.scheduler.name} produced an invalid batch at t={self.clock:.6f} "
            f"(iteration {len(self.trace.iterations)}): {reason}; plan={plan}"
        )

    def _validate(self, plan: BatchPlan):
        limits = self.engine.limits
        members = plan.members
        if len(set(members)) != len(members):
            self._fail(plan, "a request appears more than once")
        if plan.prefill_tokens + plan.decode_seqs > limits.max_batch_tokens:
            self._fail(plan, f"{plan.prefill_tokens + plan.decode_seqs} tokens exceed max_batch_tokens")

        admitted = 0
        reserved = sum(s.kv_reservation for s in self.running)
        for item in plan.prefill:
            state = self._by_id.get(item.request_id)
            if state is None or state.phase not in (Phase.WAITING, Phase.PREFILLING):
                self._fail(plan, f"{item.request_id} is not waiting for its prefill")
            if state.phase is Phase.WAITING and state not in self.waiting:
                self._fail(plan, f"{item.request_id} has not arrived")
            if not 0 < item.tokens <= state.remaining_prompt:
                self._fail(plan, f"{item.request_id} cannot prefill {item.tokens} tokens")
            if state.phase is Phase.WAITING:
                admitted += 1
                reserved += state.kv_reservation
        for request_id in plan.decode:
            state = self._by_id.get(request_id)
            if state is None or state.phase is not Phase.DECODING:
                self._fail(plan, f"{request_id} is not decoding")

        if len(self.running) + admitted > limits.max_running_seqs:
            self._fail(plan, "running sequences exceed max_running_seqs")
        if reserved > limits.kv_capacity_tokens:
            self._fail(plan, f"{reserved} reserved KV tokens exceed kv_capacity_tokens")

    def _execute(self, plan: BatchPlan):
        duration = plan_duration(plan, self.engine)
        end = self.clock + duration

        for item in plan.prefill:
            state = self._by_id[item.request_id]
            if state.phase is Phase.WAITING:
                self.waiting.remove(state)
                self.running.add(state)
                state.phase = Phase.PREFILLING
            state.prefill_done += item.tokens
            if state.remaining_prompt == 0:
                state.phase = Phase.DECODING
                state.emit(end)

        for request_id in plan.decode:
            self._by_id[request_id].emit(end)

        for release in plan.releases:
            state = self._by_id[release.request_id]
            state.release_times[release.token_index] = release.release_s

        for request_id in plan.members:
            state = self._by_id[request_id]
            if state.phase is Phase.FINISHED:
                self.running.remove(state)
                self._done += 1

        record = IterationRecord(
            start=self.clock,
            duration=duration,
            prefill_tokens=plan.prefill_tokens,
            decode_seqs=plan.decode_seqs,
            kind=plan.kind,
            prefill=tuple((item.request_id, item.tokens) for item in plan.prefill),
            decode=plan.decode
        )
        self.trace.iterations.append(record)
        self.trace.decisions.append(plan)
        self.trace.queue_depth.append(QueueSample(end, len(self.waiting), len(self.running)))
        logger.debug(
            "t=%.6f %s prefill=%d decode=%d duration=%.6f",
            self.clock, plan.kind, plan.prefill_tokens, plan.decode_seqs, duration
        )
        self.clock = end

    def run(self) -> SimTrace:
        logger.info("Simulating %d requests with %s", len(self.states), self.scheduler.name)
        while self._done < len(self.states):
            self._admit_arrivals()
            if self._done == len(self.states):
                break
            queue = QueueState(
                now=self.clock,
                waiting=list(self.waiting),
                running=list(self.running),
                engine=self.engine
            )
            plan = self.scheduler.next_batch(queue)
            if plan.is_empty:
                if self._next_arrival < len(self.states):
                    self.clock = max(self.clock, self.states[self._next_arrival].spec.arrival_s)
                    continue
                raise SchedulingError(
                    f"{self.scheduler.name} scheduled nothing at t={self.clock:.6f} "
                    f"while {len(self.states) - self._done} requests are unfinished"
                )
            self._validate(plan)
            self._execute(plan)
        logger.info(
            "Simulation finished at t=%.6f after %d iterations", self.clock, len(self.trace.iterations)
        )
        return self.trace


def run(workload: Sequence[RequestSpec], engine: EngineConfig, scheduler: Scheduler) -> SimTrace:
    return Simulator(workload, engine, scheduler).run()


def save_iterations(path: Path | str, iterations: Sequence[IterationRecord]):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as file:
        writer = csv.writer(file)
        writer.writerow(ITERATION_COLUMNS)
        for it in iterations:
            writer.writerow([
                repr(it.start),
                repr(it.duration),
                it.prefill_tokens,
                it.decode_seqs,
                it.kind,
                ";".join(f"{request_id}:{tokens}" for request_id, tokens in it.prefill),
                ";".join(it.decode)
            ])


def load_decisions(path: Path | str) -> List[BatchPlan]:
    """Batch plans of a recorded iterations CSV, for replaying a run under other costs."""
    plans = []
    with open(path, encoding="utf-8", newline="") as file:
        for row in csv.DictReader(file):
            prefill = tuple(
                PrefillItem(request_id, int(tokens))
                for request_id, tokens in (part.rsplit(":", 1) for part in row["prefill"].split(";") if part)
            )
            decode = tuple(part for part in row["decode"].split(";") if part)
            plans.append(BatchPlan(prefill=prefill, decode=decode, kind=row["kind"]))
    return plans
