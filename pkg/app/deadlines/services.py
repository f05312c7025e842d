from app.exceptions import EmptyTimelineError
from app.metrics.schemas import TokenTimeline
from .schemas import (
    DeadlinePolicy,
    DeadlineSeries,
    EndToEndPolicy,
    ReadingSpeedPolicy,
    TtftTbtPolicy,
)


def first_deadline(policy: DeadlinePolicy) -> float:
    """Deadline of the first token, the only one known before anything is generated."""
    if isinstance(policy, TtftTbtPolicy):
        return policy.ttft_s
    if isinstance(policy, EndToEndPolicy):
        return policy.e2e_s
    return policy.first_token_allowance_s


def deadlines_for(policy: DeadlinePolicy, timeline: TokenTimeline) -> DeadlineSeries:
    if not timeline.token_times:
        raise EmptyTimelineError(timeline.request_id)
    n = timeline.n_tokens

    if isinstance(policy, EndToEndPolicy):
        return [policy.e2e_s] * n

    if isinstance(policy, ReadingSpeedPolicy):
        return [
            policy.first_token_allowance_s + policy.per_token_budget_s * i
            for i in range(n)
        ]

    # TTFT/TBT chains off the actual time of the previous token in the evaluated timeline
    relative = timeline.relative_times()
    return [policy.ttft_s] + [t + policy.tbt_s for t in relative[:-1]]


def meets_slo(timeline: TokenTimeline, policy: DeadlinePolicy) -> bool:
    deadlines = deadlines_for(policy, timeline)
    return all(t <= d for t, d in zip(timeline.relative_times(), deadlines))
