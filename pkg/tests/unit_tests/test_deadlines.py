import pytest
from pydantic import ValidationError, parse_obj_as

from app.deadlines.schemas import DeadlinePolicy, EndToEndPolicy, ReadingSpeedPolicy, TtftTbtPolicy
from app.deadlines.services import deadlines_for, meets_slo
from app.exceptions import EmptyTimelineError
from app.metrics.schemas import TokenTimeline
from app.metrics.services import max_lateness


def timeline(relative, arrival=0.0):
    return TokenTimeline(request_id="r", arrival=arrival, token_times=[arrival + t for t in relative])


class TestDeadlinesFor:
    def test_reading_speed(self):
        policy = ReadingSpeedPolicy(per_token_budget_s=0.05, first_token_allowance_s=0.05)
        assert deadlines_for(policy, timeline([0.01, 0.02, 0.03])) == pytest.approx([0.05, 0.10, 0.15])

    def test_reading_speed_allowance_defaults_to_budget(self):
        policy = ReadingSpeedPolicy(per_token_budget_s=0.05)
        assert policy.first_token_allowance_s == 0.05

    def test_reading_speed_from_tokens_per_second(self):
        policy = parse_obj_as(DeadlinePolicy, {"type": "reading_speed", "tokens_per_second": 20})
        assert isinstance(policy, ReadingSpeedPolicy)
        assert policy.per_token_budget_s == pytest.approx(0.05)
        assert policy.tokens_per_second == pytest.approx(20)

    def test_end_to_end(self):
        policy = EndToEndPolicy(e2e_s=10)
        assert deadlines_for(policy, timeline([1, 2, 3, 4])) == [10, 10, 10, 10]

    def test_ttft_tbt_chains_off_previous_token(self):
        policy = TtftTbtPolicy(ttft_s=1.0, tbt_s=0.2)
        assert deadlines_for(policy, timeline([0.5, 0.9, 2.0], arrival=3.0)) == pytest.approx([1.0, 0.7, 1.1])

    def test_empty_timeline(self):
        with pytest.raises(EmptyTimelineError, match="no output tokens"):
            deadlines_for(EndToEndPolicy(e2e_s=1), timeline([]))

    @pytest.mark.parametrize("data", [
        {"type": "ttft_tbt", "ttft_s": 0, "tbt_s": 1},
        {"type": "end_to_end", "e2e_s": -1},
        {"type": "reading_speed", "tokens_per_second": 0},
        {"type": "reading_speed", "per_token_budget_s": 0.1, "unknown": 1},
        {"type": "fastest"},
    ])
    def test_invalid_policies(self, data):
        with pytest.raises(ValidationError):
            parse_obj_as(DeadlinePolicy, data)


class TestMeetsSlo:
    policy = ReadingSpeedPolicy(per_token_budget_s=0.05, first_token_allowance_s=0.05)

    def test_all_early(self):
        assert meets_slo(timeline([0.04, 0.09]), self.policy)

    def test_first_token_late(self):
        assert not meets_slo(timeline([0.06, 0.09]), self.policy)

    def test_single_token_end_to_end(self):
        assert meets_slo(timeline([0.5]), EndToEndPolicy(e2e_s=10))

    def test_equivalent_to_non_positive_lateness(self):
        policies = [self.policy, EndToEndPolicy(e2e_s=0.3), TtftTbtPolicy(ttft_s=0.1, tbt_s=0.04)]
        timelines = [timeline([0.04, 0.09, 0.3]), timeline([0.1, 0.12, 0.14]), timeline([0.01])]
        for policy in policies:
            for t in timelines:
                assert meets_slo(t, policy) == (max_lateness(t, policy) <= 0)

    @pytest.mark.parametrize("policy", [ReadingSpeedPolicy(per_token_budget_s=0.05), EndToEndPolicy(e2e_s=0.2)])
    def test_shifting_later_never_helps(self, policy):
        base = [0.03, 0.08, 0.2, 0.21]
        for delta in (0.0, 0.01, 0.05, 0.5):
            shifted = timeline([t + delta for t in base])
            if not meets_slo(timeline(base), policy):
                assert not meets_slo(shifted, policy)
