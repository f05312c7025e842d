import functools
import json
import logging
from pathlib import Path
from typing import Any, Dict

import click
from pydantic import ValidationError

from app.config import settings
from app.delivery.schemas import DelayConfig, FixedRateMode, TbtCapMode
from app.delivery.services import delay_records
from app.exceptions import ConfigError, SimulatorError
from app.logs import setup_logging
from app.metrics.services import load_trace, save_report, save_trace
from app.runner.schemas import ExperimentConfig
from app.runner.services import ExperimentService, save_capacity

logger = logging.getLogger(__name__)


def _fail(err: Exception):
    payload = {"error": type(err).__name__, "message": str(err)}
    click.echo(json.dumps(payload), err=True)
    raise SystemExit(1)


def handle_errors(command):
    @functools.wraps(command)
    def wrapper(*args, **kwargs):
        try:
            return command(*args, **kwargs)
        except (SimulatorError, ValidationError, ValueError, KeyError, OSError) as err:
            _fail(err)
    return wrapper


def load_config(
        path: str | None,
        seed: int | None = None,
        out: str | None = None,
        rate: float | None = None
) -> ExperimentConfig:
    """Experiment document with the command line overrides applied before validation."""
    data: Dict[str, Any] = {}
    if path is not None:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
        if not isinstance(data, dict):
            raise ConfigError(f"{path} must hold one JSON object")
    if seed is not None:
        data["seed"] = seed
        if isinstance(data.get("workload"), dict):
            data["workload"]["seed"] = seed
    if out is not None:
        data["output_dir"] = out
    if rate is not None:
        data["rates"] = [rate]
    return ExperimentConfig.parse_obj(data)


def _echo(model):
    click.echo(model.json(indent=2))


config_option = click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False),
                             required=True, help="Experiment JSON document")
seed_option = click.option("--seed", type=int, help="Override the experiment seed")
out_option = click.option("--out", type=click.Path(file_okay=False), help="Override the output directory")


@click.group()
@click.option("--log-level", default=None, help=f"Logging level, defaults to {settings.log_level}")
def cli(log_level):
    """Continuous batching simulator and SLO metrics engine."""
    setup_logging(log_level)


@cli.command()
@config_option
@seed_option
@out_option
@click.option("--rate", type=float, help="Request rate, defaults to the workload rate")
@handle_errors
def simulate(config_path, seed, out, rate):
    """Run every variant at a single request rate."""
    config = load_config(config_path, seed, out)
    config = config.copy(update={"rates": [rate if rate is not None else config.workload.rate]})
    _echo(ExperimentService(settings).run_experiment(config))


@cli.command()
@config_option
@seed_option
@out_option
@handle_errors
def sweep(config_path, seed, out):
    """Run every variant at every rate of the sweep."""
    config = load_config(config_path, seed, out)
    _echo(ExperimentService(settings).run_experiment(config))


@cli.command()
@config_option
@seed_option
@out_option
@click.option("--threshold", type=float, help="SLO attainment to sustain, defaults to the config's")
@click.option("--variant", help="Variant to search, defaults to the first one")
@handle_errors
def capacity(config_path, seed, out, threshold, variant):
    """Bisect the largest request rate that keeps the attainment threshold."""
    config = load_config(config_path, seed, out)
    result = ExperimentService(settings).capacity_search(config, threshold, variant)
    save_capacity(config, result)
    _echo(result)


@cli.command()
@click.option("--trace", "trace_path", type=click.Path(exists=True, dir_okay=False), required=True)
@click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False),
              help="Experiment document supplying the policy, benefit and window trimming")
@click.option("--start", type=float, help="Window start, seconds")
@click.option("--end", type=float, help="Window end, seconds")
@out_option
@handle_errors
def metrics(trace_path, config_path, start, end, out):
    """Evaluate an existing trace file."""
    data = json.loads(Path(config_path).read_text(encoding="utf-8")) if config_path else {}
    data.setdefault("workload", {"rate": 1.0, "count": 1})
    config = ExperimentConfig.parse_obj(data)
    report = ExperimentService.evaluate_trace(config, load_trace(trace_path), start, end)
    if out is not None:
        save_report(report, Path(out) / "report.json", Path(out) / "report.csv")
    click.echo(report.aggregates.json(indent=2))


@cli.command()
@click.option("--trace", "trace_path", type=click.Path(exists=True, dir_okay=False), required=True)
@click.option("--tbt-target", type=float, help="Release cadence equal to the TBT target, seconds")
@click.option("--per-token", type=float, help="Fixed release interval per token, seconds")
@click.option("--first-token-delayed", is_flag=True, help="Hold the first token too")
@click.option("--output", type=click.Path(dir_okay=False), required=True, help="Delayed trace file")
@handle_errors
def delay(trace_path, tbt_target, per_token, first_token_delayed, output):
    """Apply the output-delay transform to a trace."""
    if (tbt_target is None) == (per_token is None):
        raise ConfigError("pass exactly one of --tbt-target and --per-token")
    mode = TbtCapMode(tbt_target_s=tbt_target) if tbt_target is not None else FixedRateMode(per_token_s=per_token)
    config = DelayConfig(mode=mode, first_token_delayed=first_token_delayed)
    records = delay_records(load_trace(trace_path), config)
    save_trace(output, records)
    logger.info("Wrote %d delayed records to %s", len(records), output)


@cli.command()
def serve():
    """Serve the HTTP API."""
    import uvicorn

    uvicorn.run("app.app:app", host=settings.host, port=settings.port)


if __name__ == "__main__":
    cli()
