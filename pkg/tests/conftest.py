import json
from pathlib import Path

import pytest
from httpx import AsyncClient

from app.app import app
from app.config import Settings, get_settings
from app.runner.schemas import ExperimentConfig
from app.simcore.schemas import CostModel, EngineConfig

FIXTURES = Path(__file__).parent / "fixtures"


@pytest.fixture(scope="session")
def anyio_backend():
    return "asyncio"


@pytest.fixture
def settings():
    return Settings(sweep_workers=1)


@pytest.fixture
async def client(settings):
    app.dependency_overrides[get_settings] = lambda: settings
    async with AsyncClient(app=app, base_url="http://127.0.0.1:8000") as cli:
        yield cli
    app.dependency_overrides.clear()


@pytest.fixture
def fixtures_dir():
    return FIXTURES


@pytest.fixture
def three_req_path():
    return FIXTURES / "three_req.jsonl"


@pytest.fixture
def lengths_path():
    return FIXTURES / "lengths_mixed.jsonl"


@pytest.fixture
def experiment_data(tmp_path):
    data = json.loads((FIXTURES / "experiment.json").read_text(encoding="utf-8"))
    data["output_dir"] = str(tmp_path / "out")
    return data


@pytest.fixture
def experiment(experiment_data):
    return ExperimentConfig.parse_obj(experiment_data)


@pytest.fixture
def stall_engine():
    """Costs of the two-request stall scenario: base 10 ms, 1 ms per prompt token, 2 ms per sequence."""
    return EngineConfig(cost=CostModel(base_s=0.01, prefill_per_token_s=0.001, decode_per_seq_s=0.002))
