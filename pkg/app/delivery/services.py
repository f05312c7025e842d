from typing import Iterable, List

from app.metrics.schemas import TokenTimeline, TraceRecord
from .schemas import DelayConfig


def release_times(arrival: float, token_times: List[float], config: DelayConfig) -> List[float]:
    """
    Buffer tokens and release them on a cadence of ``hold`` seconds.

    An early token waits until the previous release plus ``hold``; a token generated
    after that instant goes out immediately and the cadence restarts from it.
    """
    hold = config.hold
    releases = []
    for i, generated in enumerate(token_times):
        if i == 0:
            release = max(generated, arrival + hold) if config.first_token_delayed else generated
        else:
            cadence = releases[-1] + hold
            release = cadence if generated <= cadence else generated
        releases.append(release)
    return releases


def apply_output_delay(timeline: TokenTimeline, config: DelayConfig) -> TokenTimeline:
    return TokenTimeline(
        request_id=timeline.request_id,
        arrival=timeline.arrival,
        token_times=release_times(timeline.arrival, timeline.token_times, config),
        completed=timeline.completed
    )


def delay_record(record: TraceRecord, config: DelayConfig) -> TraceRecord:
    """Adds delivery times computed from the record's current delivery timeline."""
    source = record.timeline(delivered=True)
    return record.copy(update={
        "delivery_times_s": release_times(source.arrival, source.token_times, config)
    })


def delay_records(records: Iterable[TraceRecord], config: DelayConfig) -> List[TraceRecord]:
    return [delay_record(record, config) for record in records]
