import csv
import json
from pathlib import Path

import pytest
from pydantic import ValidationError

from app.deadlines.schemas import EndToEndPolicy
from app.exceptions import EmptyWindowError, InfeasibleBracketError, SchedulingError
from app.metrics.schemas import TraceRecord
from app.metrics.services import load_trace
from app.runner import services
from app.runner.schemas import CapacityConfig, ExperimentConfig, VariantConfig
from app.runner.services import ExperimentService, load_period, simulate_cell, summary_row
from app.simcore.schemas import CostModel, EngineConfig
from app.workload.services import load_workload


@pytest.fixture
def service(settings):
    return ExperimentService(settings)


def single_variant(experiment):
    return experiment.copy(update={"variants": experiment.variants[:1]})


class TestExperimentConfig:
    def test_empty_rates(self, experiment_data):
        experiment_data["rates"] = []
        with pytest.raises(ValidationError):
            ExperimentConfig.parse_obj(experiment_data)

    def test_unsorted_rates(self, experiment_data):
        experiment_data["rates"] = [2.0, 1.0]
        with pytest.raises(ValidationError):
            ExperimentConfig.parse_obj(experiment_data)

    def test_duplicate_variants(self, experiment_data):
        experiment_data["variants"].append({"name": "chunked"})
        with pytest.raises(ValidationError):
            ExperimentConfig.parse_obj(experiment_data)

    def test_window_must_leave_room(self, experiment_data):
        experiment_data["window"] = {"warmup_fraction": 0.6, "drain_fraction": 0.4}
        with pytest.raises(ValidationError):
            ExperimentConfig.parse_obj(experiment_data)

    def test_defaults(self):
        config = ExperimentConfig.parse_obj({"workload": {"rate": 2.0, "count": 10}})
        assert config.variants[0].name == "vllm_like"
        assert config.benefit.alpha == 5
        assert config.policy.per_token_budget_s == pytest.approx(0.05)
        assert config.sweep_rates() == [2.0]

    def test_policy_selected_by_type(self):
        config = ExperimentConfig.parse_obj({
            "workload": {"rate": 2.0, "count": 10},
            "policy": {"type": "end_to_end", "e2e_s": 10}
        })
        assert isinstance(config.policy, EndToEndPolicy)
        with pytest.raises(ValidationError):
            ExperimentConfig.parse_obj({"workload": {"rate": 2.0, "count": 10}, "policy": {"type": "nope"}})

    def test_seed_falls_back_to_experiment_seed(self, experiment):
        assert experiment.workload_at(3.0).seed == 11
        assert experiment.workload_at(3.0).rate == 3.0


class TestRunExperiment:
    def test_one_variant_three_rates(self, experiment, service):
        result = service.run_experiment(single_variant(experiment))
        assert [(r.variant, r.rate) for r in result.rows] == [("vllm_like", 0.5), ("vllm_like", 1.0), ("vllm_like", 2.0)]
        throughputs = [r.throughput for r in result.rows]
        assert throughputs == sorted(throughputs)
        assert all(r.error is None for r in result.rows)

    def test_artifacts(self, experiment, service):
        result = service.run_experiment(experiment)
        out = experiment.output_dir
        manifest = json.load(open(f"{out}/manifest.json"))
        assert manifest["config"]["name"] == "fixture"
        assert "vllm_like/rate_0.5/trace.jsonl" in manifest["artifacts"]
        assert "figures/rate_sweep.csv" in result.artifacts
        for artifact in result.artifacts:
            assert (Path(out) / artifact).exists()

        rows = list(csv.DictReader(open(f"{out}/summary.csv")))
        assert len(rows) == 6
        figure = list(csv.reader(open(f"{out}/figures/rate_sweep.csv")))
        assert figure[0][:2] == ["rate", "vllm_like.throughput"]
        assert len(figure) == 4

        timeline = list(csv.DictReader(open(f"{out}/chunked/rate_1/token_timeline.csv")))
        assert timeline and float(timeline[0]["delivered_s"]) >= float(timeline[0]["generated_s"])
        cdf = list(csv.DictReader(open(f"{out}/chunked/rate_1/tbt_cdf.csv")))
        assert {row["timeline"] for row in cdf} == {"generated", "delivered"}
        assert float(cdf[-1]["cdf"]) == 1.0

    def test_variants_share_arrivals(self, experiment, service):
        service.run_experiment(experiment)
        out = experiment.output_dir
        vllm = load_workload(f"{out}/vllm_like/rate_2/workload.jsonl")
        chunked = load_workload(f"{out}/chunked/rate_2/workload.jsonl")
        assert vllm == chunked

    def test_reproducible(self, experiment, service, tmp_path):
        first = experiment.copy(update={"output_dir": str(tmp_path / "first")})
        second = experiment.copy(update={"output_dir": str(tmp_path / "second")})
        service.run_experiment(first)
        service.run_experiment(second)
        for name in ("summary.csv", "vllm_like/rate_1/workload.jsonl", "chunked/rate_2/trace.jsonl"):
            assert (tmp_path / "first" / name).read_bytes() == (tmp_path / "second" / name).read_bytes()

    def test_failing_cell_is_recorded(self, experiment, service, monkeypatch):
        original = services.simulate_cell

        def flaky(config, variant, rate):
            if variant.name == "chunked" and rate == 1.0:
                raise SchedulingError("scheduler stalled")
            return original(config, variant, rate)

        monkeypatch.setattr(services, "simulate_cell", flaky)
        result = service.run_experiment(experiment)
        failed = result.row("chunked", 1.0)
        assert failed.error == "SchedulingError: scheduler stalled"
        assert failed.throughput is None
        assert result.row("chunked", 2.0).error is None
        manifest = json.load(open(f"{experiment.output_dir}/manifest.json"))
        assert manifest["failed_cells"] == [{"variant": "chunked", "rate": 1.0, "error": failed.error}]

    def test_unexpected_exception_is_recorded(self, experiment, service, monkeypatch):
        original = services.simulate_cell

        def broken(config, variant, rate):
            if rate == 0.5:
                raise ZeroDivisionError("division by zero")
            return original(config, variant, rate)

        monkeypatch.setattr(services, "simulate_cell", broken)
        result = service.run_experiment(single_variant(experiment))
        assert result.row("vllm_like", 0.5).error == "ZeroDivisionError: division by zero"
        assert result.row("vllm_like", 2.0).error is None
        assert (Path(experiment.output_dir) / "summary.csv").exists()

    def test_delivery_variant(self, experiment, service):
        config = experiment.copy(update={
            "variants": [VariantConfig.parse_obj({
                "name": "delayed",
                "scheduler": {"type": "vllm_like"},
                "delivery": {"mode": {"type": "tbt_cap", "tbt_target_s": 0.05}}
            })],
            "rates": [1.0]
        })
        service.run_experiment(config)
        records = load_trace(f"{config.output_dir}/delayed/rate_1/trace.jsonl")
        assert all(r.delivery_times_s is not None for r in records)


class TestCapacitySearch:
    def test_rate_inside_bracket(self, experiment, service):
        result = service.capacity_search(experiment)
        bracket = experiment.capacity
        assert bracket.min_rate < result.rate < bracket.max_rate
        passing = [p for p in result.probes if p.attainment >= 0.9]
        failing = [p for p in result.probes if p.attainment < 0.9]
        assert max(p.rate for p in passing) == result.rate
        assert min(p.rate for p in failing if p.rate > result.rate) - result.rate <= bracket.resolution + 1e-9
        assert service.attainment(experiment, experiment.variant(), result.rate) >= 0.9
        assert service.attainment(experiment, experiment.variant(), result.rate + 0.1) < 0.9

    def test_unconstrained_engine(self, experiment, service):
        fast = experiment.copy(update={"engine": EngineConfig(cost=CostModel(
            base_s=1e-6, prefill_per_token_s=0, decode_per_seq_s=0
        ))})
        result = service.capacity_search(fast, threshold=1.0)
        assert result.rate == fast.capacity.max_rate

    def test_infeasible_bracket(self, experiment, service):
        config = experiment.copy(update={"capacity": CapacityConfig(min_rate=30, max_rate=40)})
        with pytest.raises(InfeasibleBracketError, match="infeasible bracket"):
            service.capacity_search(config)

    def test_named_variant(self, experiment, service):
        assert service.capacity_search(experiment, variant_name="chunked").variant == "chunked"


class TestRateSweepShape:
    rates = [0.5, 1.5, 2.5, 4.0, 7.0, 9.0]

    def test_throughput_plateau_and_ttft_growth(self, tmp_path):
        config = ExperimentConfig.parse_obj({
            "seed": 1,
            "workload": {"rate": 1.0, "count": 400},
            "policy": {"type": "reading_speed", "tokens_per_second": 10},
            "benefit": {"alpha": 5},
            "window": {"warmup_fraction": 0.0, "drain_fraction": 0.05},
            "rates": self.rates,
            "output_dir": str(tmp_path)
        })
        variant = config.variant()
        rows = [summary_row(variant.name, rate, simulate_cell(config, variant, rate).report) for rate in self.rates]

        *_, before_last, last = [r.throughput for r in rows]
        assert abs(last - before_last) <= 0.05 * before_last
        assert rows[-1].mean_ttft >= 10 * rows[0].mean_ttft

        smooth = [r.smooth_goodput for r in rows]
        assert max(smooth[1:-1]) > max(smooth[0], smooth[-1])


class TestEvaluateTrace:
    def test_explicit_window(self, experiment, three_req_path):
        report = ExperimentService.evaluate_trace(experiment, load_trace(three_req_path), 0.0, 3.0)
        assert report.aggregates.requests == 3

    def test_default_window(self, experiment, three_req_path):
        records = load_trace(three_req_path)
        report = ExperimentService.evaluate_trace(experiment, records)
        horizon = load_period([r.arrival_s for r in records])
        assert report.aggregates.window_s == pytest.approx(0.9 * horizon)

    def test_batch_trace_uses_every_token(self, experiment):
        records = [
            TraceRecord(request_id="a", arrival_s=0.0, token_times_s=[0.2, 0.3, 0.4]),
            TraceRecord(request_id="b", arrival_s=0.0, token_times_s=[0.5, 0.6]),
            TraceRecord(request_id="c", arrival_s=0.0, token_times_s=[0.7, 1.0]),
        ]
        report = ExperimentService.evaluate_trace(experiment, records)
        assert report.aggregates.requests == 3
        assert report.aggregates.tokens == 7
        assert report.aggregates.window_s == pytest.approx(1.0)

    def test_batch_trace_without_tokens(self, experiment):
        records = [TraceRecord(request_id="a", arrival_s=0.0, completed=False)]
        with pytest.raises(EmptyWindowError):
            ExperimentService.evaluate_trace(experiment, records)
