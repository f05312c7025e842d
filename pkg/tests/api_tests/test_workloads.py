import pytest


class TestGenerateWorkload:
    @pytest.mark.anyio
    async def test_success_generate(self, client):
        resp = await client.post("/workloads/generate", json={"rate": 2.0, "count": 5, "seed": 1})
        assert resp.status_code == 200
        data = resp.json()
        assert [r["request_id"] for r in data] == [f"req-0000{i}" for i in range(5)]
        assert all(r["prompt_len"] >= 1 for r in data)

    @pytest.mark.anyio
    async def test_invalid_rate(self, client):
        resp = await client.post("/workloads/generate", json={"rate": 0, "count": 5})
        assert resp.status_code == 422

    @pytest.mark.anyio
    async def test_missing_dataset(self, client, tmp_path):
        resp = await client.post(
            "/workloads/generate",
            json={
                "rate": 1.0,
                "count": 3,
                "length_source": {"type": "dataset_file", "path": str(tmp_path / "missing.jsonl")}
            }
        )
        assert resp.status_code == 422
        assert "cannot read" in resp.json()["detail"]
