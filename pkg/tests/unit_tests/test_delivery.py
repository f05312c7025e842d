import pytest

from app.deadlines.schemas import ReadingSpeedPolicy, TtftTbtPolicy
from app.deadlines.services import meets_slo
from app.delivery.schemas import DelayConfig, FixedRateMode, TbtCapMode
from app.delivery.services import apply_output_delay, delay_record, release_times
from app.metrics.schemas import TokenTimeline, TraceRecord
from app.metrics.services import percentile, tbt_series, ttft, user_idle_latency
from app.schedulers.services import VllmLikeScheduler
from app.simcore.schemas import CostModel, EngineConfig
from app.simcore.services import run
from app.workload.schemas import WorkloadConfig
from app.workload.services import generate


def cap(hold, first_token_delayed=False):
    return DelayConfig(mode=TbtCapMode(tbt_target_s=hold), first_token_delayed=first_token_delayed)


class TestReleaseTimes:
    def test_smoothed_then_late(self):
        assert release_times(0.0, [0.1, 0.12, 0.14, 1.0], cap(0.2)) == pytest.approx([0.1, 0.3, 0.5, 1.0])

    def test_identity_when_gaps_exceed_hold(self):
        times = [0.1, 0.5, 0.9, 1.5]
        assert release_times(0.0, times, cap(0.2)) == times

    def test_single_token(self):
        assert release_times(0.0, [0.3], cap(0.2)) == [0.3]

    def test_cadence_restarts_after_stall(self):
        assert release_times(0.0, [0.1, 0.11, 1.0, 1.01], cap(0.2)) == pytest.approx([0.1, 0.3, 1.0, 1.2])

    def test_fixed_rate(self):
        config = DelayConfig(mode=FixedRateMode(per_token_s=0.1))
        assert release_times(0.0, [0.05, 0.06, 0.07], config) == pytest.approx([0.05, 0.15, 0.25])

    def test_first_token_delayed(self):
        assert release_times(1.0, [1.05, 1.1], cap(0.2, True)) == pytest.approx([1.2, 1.4])

    def test_budgets_positive(self):
        with pytest.raises(ValueError):
            TbtCapMode(tbt_target_s=0)


class TestDelayRecord:
    def test_keeps_generation_times(self):
        record = TraceRecord(request_id="a", arrival_s=0.0, token_times_s=[0.1, 0.12, 0.14])
        delayed = delay_record(record, cap(0.2))
        assert delayed.token_times_s == record.token_times_s
        assert delayed.delivery_times_s == pytest.approx([0.1, 0.3, 0.5])

    def test_starts_from_existing_delivery(self):
        record = TraceRecord(request_id="a", arrival_s=0.0, token_times_s=[0.1, 0.12, 0.14],
                             delivery_times_s=[0.1, 0.4, 0.41])
        delayed = delay_record(record, cap(0.2))
        assert delayed.delivery_times_s == pytest.approx([0.1, 0.4, 0.6])


class TestOutputDelayProperties:
    """The delay trick improves TBT-based metrics while never helping the reader."""

    tbt_budget = 0.1
    ttft_tbt = TtftTbtPolicy(ttft_s=2.0, tbt_s=0.1)
    reading = ReadingSpeedPolicy(per_token_budget_s=0.05)

    def traces(self):
        engine = EngineConfig(cost=CostModel(base_s=0.01, prefill_per_token_s=0.0004, decode_per_seq_s=0.001))
        for seed in range(20):
            workload = generate(WorkloadConfig(rate=3.0 + seed % 4, count=30, seed=seed))
            yield [r.timeline() for r in run(workload, engine, VllmLikeScheduler()).records()]

    def test_on_simulated_traces(self):
        for timelines in self.traces():
            generated_gaps = [g for t in timelines for g in tbt_series(t)]
            p99 = percentile(generated_gaps, 0.99)
            config = cap(0.999 * min(self.tbt_budget, p99))
            released = [apply_output_delay(t, config) for t in timelines]

            before = sum(meets_slo(t, self.ttft_tbt) for t in timelines)
            after = sum(meets_slo(t, self.ttft_tbt) for t in released)
            assert after >= before

            delivered_gaps = [g for t in released for g in tbt_series(t)]
            assert percentile(delivered_gaps, 0.99) <= p99 + 1e-12

            for original, delayed in zip(timelines, released):
                assert ttft(delayed) == ttft(original)
                assert all(r >= g for r, g in zip(delayed.token_times, original.token_times))
                assert user_idle_latency(delayed, self.reading) >= user_idle_latency(original, self.reading)

    def test_held_gaps_equal_hold(self):
        timeline = TokenTimeline(request_id="a", arrival=0.0, token_times=[0.1, 0.11, 0.12, 0.9, 0.91])
        released = apply_output_delay(timeline, cap(0.05))
        for gap, generated in zip(tbt_series(released), tbt_series(timeline)):
            if gap > 0.05 + 1e-12:
                assert generated > 0.05
            else:
                assert gap == pytest.approx(0.05)
