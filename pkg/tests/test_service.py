import time

import pytest
from fastapi.testclient import TestClient

from fedprio.service import create_app


@pytest.fixture()
def client(tmp_path):
    app = create_app(out_root=tmp_path / "jobs")
    with TestClient(app) as test_client:
        yield test_client


def tiny_experiment():
    return {
        "seed": 5,
        "dataset": {
            "kind": "synthetic_multiclass",
            "num_classes": 3,
            "dim": 4,
            "samples_per_class": 30,
            "separation": 2.0,
            "noise": 1.0,
            "partition": {"scheme": "iid", "num_clients": 6},
        },
        "trainer": {"learning_rate": 0.3, "local_epochs": 2, "client_fraction": 0.5, "max_rounds": 3},
        "criteria": ["DS"],
        "targets": [0.5],
        "device_fractions": [0.5],
    }


def wait_for(client, job_id, timeout=30.0):
    deadline = time.time() + timeout
    while time.time() < deadline:
        status = client.get(f"/jobs/{job_id}").json()
        if status["state"] in ("done", "failed"):
            return status
        time.sleep(0.05)
    raise AssertionError(f"job {job_id} did not finish in time")


def test_health(client):
    body = client.get("/health").json()
    assert body["status"] == "ok"


def test_score_endpoint_reference_values(client):
    response = client.post(
        "/score",
        json={"vectors": [[0.9, 0.2, 0.4], [0.1, 0.8, 0.5]], "score_fn": "prioritized"},
    )
    assert response.status_code == 200
    scores = response.json()["scores"]
    assert scores[0] == pytest.approx(1.152, abs=1e-12)
    assert scores[1] == pytest.approx(0.22, abs=1e-12)


def test_score_endpoint_mean(client):
    scores = client.post(
        "/score", json={"vectors": [[0.9, 0.2, 0.4]], "score_fn": "mean"}
    ).json()["scores"]
    assert scores[0] == pytest.approx(1.5, abs=1e-12)


def test_score_endpoint_rejects_out_of_range(client):
    response = client.post("/score", json={"vectors": [[1.3]]})
    assert response.status_code == 422


def test_weights_endpoint_normalizes_and_weights(client):
    response = client.post(
        "/weights",
        json={
            "clients": [
                {"client_id": "alice", "raw": {"DS": 300, "LD": 3}},
                {"client_id": "bob", "raw": {"DS": 100, "LD": 1}},
            ],
            "ordering": ["DS", "LD"],
            "score_fn": "prioritized",
        },
    )
    assert response.status_code == 200
    body = response.json()
    assert body["normalized"]["alice"]["DS"] == pytest.approx(0.75)
    assert body["normalized"]["bob"]["LD"] == pytest.approx(0.25)
    assert sum(body["weights"].values()) == pytest.approx(1.0)
    assert body["weights"]["alice"] > body["weights"]["bob"]


def test_weights_endpoint_missing_criterion(client):
    response = client.post(
        "/weights",
        json={
            "clients": [{"client_id": "a", "raw": {"DS": 1}}],
            "ordering": ["DS", "LD"],
        },
    )
    assert response.status_code == 422


def test_experiment_job_lifecycle(client):
    created = client.post("/experiments", json={"config": tiny_experiment()})
    assert created.status_code == 202
    job_id = created.json()["job_id"]

    status = wait_for(client, job_id)
    assert status["state"] == "done"
    assert status["rounds_completed"] == 3
    assert status["experiment_ids"] == ["DS"]
    assert 0.0 <= status["global_accuracy"] <= 1.0

    records = client.get(f"/jobs/{job_id}/records").json()
    assert [r["round"] for r in records] == [1, 2, 3]
    assert all(abs(sum(r["weights"].values()) - 1.0) < 1e-9 for r in records)

    reports = client.get(f"/jobs/{job_id}/reports").json()
    assert "trace.csv" in reports
    trace = client.get(f"/jobs/{job_id}/reports/trace.csv")
    assert trace.status_code == 200
    assert trace.text.splitlines()[0] == "round,experiment_id,global_accuracy"


def test_sweep_job_lifecycle(client):
    sweep = {"base": tiny_experiment(), "criteria_set": ["DS", "LD"]}
    created = client.post("/sweeps", json={"config": sweep})
    assert created.status_code == 202
    job_id = created.json()["job_id"]
    status = wait_for(client, job_id)
    assert status["state"] == "done"
    assert status["experiment_ids"] == ["DS", "LD", "DS>LD", "LD>DS"]
    reports = client.get(f"/jobs/{job_id}/reports").json()
    assert "gain_table.csv" in reports
    assert any(name.startswith("runs/") for name in reports)


def test_invalid_config_is_422(client):
    bad = tiny_experiment()
    bad["criteria"] = ["DS", "DS"]
    response = client.post("/experiments", json={"config": bad})
    assert response.status_code == 422
    assert "duplicate" in response.json()["detail"]


def test_failed_job_reports_error(client):
    doc = tiny_experiment()
    doc["dataset"] = {"kind": "idx", "images": "/missing.idx", "labels": "/missing.idx"}
    job_id = client.post("/experiments", json={"config": doc}).json()["job_id"]
    status = wait_for(client, job_id)
    assert status["state"] == "failed"
    assert status["error"]


def test_unknown_job_and_report_are_404(client):
    assert client.get("/jobs/job-9999").status_code == 404
    job_id = client.post("/experiments", json={"config": tiny_experiment()}).json()["job_id"]
    wait_for(client, job_id)
    assert client.get(f"/jobs/{job_id}/reports/nope.csv").status_code == 404


def test_jobs_listing(client):
    job_id = client.post("/experiments", json={"config": tiny_experiment()}).json()["job_id"]
    wait_for(client, job_id)
    listing = client.get("/jobs").json()
    assert any(job["job_id"] == job_id for job in listing)
