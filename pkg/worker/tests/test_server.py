import json

import pytest
from fastapi.testclient import TestClient

from augforge_worker.evaluate import WorkerSettings
from augforge_worker.server import create_app


@pytest.fixture(scope="module")
def client():
    settings = WorkerSettings(train_samples=96, test_samples=48, seed=0)
    with TestClient(create_app(settings)) as c:
        yield c


def test_health(client):
    response = client.get("/health")
    assert response.status_code == 200
    assert response.json()["status"] == "ok"


class TestEvaluateEndpoint:
    def test_accuracy_round_trip(self, client, fixed_tail_candidate, canonical_config):
        # body shaped exactly as the orchestrator's scheduler sends it
        body = {"job_id": "job-1", "code": fixed_tail_candidate, "config": canonical_config}
        response = client.post("/evaluate", json=body)
        assert response.status_code == 200
        payload = response.json()
        assert payload["job_id"] == "job-1"
        assert 0.0 <= payload["accuracy"] <= 1.0

    def test_broken_candidate_classified_not_5xx(self, client, canonical_config):
        body = {"job_id": "job-2", "code": "def transform(:", "config": canonical_config}
        response = client.post("/evaluate", json=body)
        assert response.status_code == 200
        payload = response.json()
        assert payload["job_id"] == "job-2"
        assert payload["error_class"] == "syntax_error"
        assert "detail" in payload

    def test_runtime_failure_classified(self, client, canonical_config):
        body = {
            "job_id": "job-3",
            "code": "def transform():\n    return lambda image: image\n",
            "config": canonical_config,
        }
        payload = client.post("/evaluate", json=body).json()
        assert payload["error_class"] == "runtime_error"

    def test_malformed_request_is_not_200(self, client):
        response = client.post("/evaluate", json={"job_id": "job-4"})
        assert response.status_code != 200


class TestFinetuneEndpoint:
    def test_runs_adapter_job(self, client, tmp_path):
        data = tmp_path / "pairs.jsonl"
        rows = [
            {"prompt": f"base {i}", "output": f"<tr>candidate {i}</tr>", "provenance": "original"}
            for i in range(4)
        ]
        data.write_text("".join(json.dumps(r) + "\n" for r in rows))

        body = {
            "job_id": "ft-1",
            "dataset_path": str(data),
            "out_dir": str(tmp_path / "adapter"),
        }
        response = client.post("/finetune", json=body)
        assert response.status_code == 200
        payload = response.json()
        assert payload["job_id"] == "ft-1"
        assert len(payload["epoch_losses"]) == 3
        assert payload["optimizer_requested"] == "paged_adamw_8bit"
        assert (tmp_path / "adapter" / "adapter_model.pt").exists()
