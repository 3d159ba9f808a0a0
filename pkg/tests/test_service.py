import time

import pytest
from fastapi.testclient import TestClient

from lakesim.service import create_app


@pytest.fixture(scope="module")
def client():
    return TestClient(create_app())


def _wait_done(client, job_id, timeout=120.0):
    t0 = time.time()
    while time.time() - t0 < timeout:
        status = client.get(f"/api/experiments/{job_id}").json()
        if status["state"] in ("done", "failed"):
            return status
        time.sleep(0.1)
    raise TimeoutError(f"job {job_id} did not finish")


def test_health(client):
    resp = client.get("/api/health")
    assert resp.status_code == 200
    assert resp.json()["status"] == "ok"


def test_green_check_sync(client):
    resp = client.post("/api/green-check", json={"pairs": 2000, "seed": 1})
    assert resp.status_code == 200
    body = resp.json()
    assert body["identity_max_deviation"] <= 1e-12
    assert body["symmetry_max_deviation"] <= 1e-12


def test_norm_probe(client):
    resp = client.post("/api/norm", json={
        "config": {"experiment": "run-inviscid", "numerics": {"n": 32}},
        "p": 2.0,
    })
    assert resp.status_code == 200
    assert resp.json()["value"] > 0


def test_submit_and_fetch_report(client, tmp_path):
    payload = {
        "config": {
            "experiment": "green-check",
            "numerics": {"n": 32},
            "output": {"directory": str(tmp_path / "svc")},
        }
    }
    resp = client.post("/api/experiments", json=payload)
    assert resp.status_code == 200
    job_id = resp.json()["job_id"]
    status = _wait_done(client, job_id)
    assert status["state"] == "done"
    report = client.get(f"/api/experiments/{job_id}/report").json()
    assert report["experiment"] == "green-check"
    assert (tmp_path / "svc" / "report.json").exists()


def test_unknown_job(client):
    assert client.get("/api/experiments/nope").status_code == 404
    assert client.get("/api/experiments/nope/report").status_code == 404


def test_invalid_config_rejected(client):
    resp = client.post("/api/experiments", json={
        "config": {"experiment": "run-viscous", "physics": {"mu": 1e-3},
                   "domain": {"alpha": 0.7}}
    })
    assert resp.status_code == 422


def test_failed_job_surfaces_error(client, tmp_path):
    # a sweep config that passes validation but fails in the runner
    payload = {
        "config": {
            "experiment": "run-inviscid",
            "numerics": {"n": 32},
            "physics": {"T": 0.1,
                        "initial_data": {"type": "radial_bump",
                                         "center": [0.6, 0.0],
                                         "radius": 0.39}},
            "output": {"directory": str(tmp_path / "bad")},
        }
    }
    resp = client.post("/api/experiments", json=payload)
    job_id = resp.json()["job_id"]
    status = _wait_done(client, job_id)
    assert status["state"] == "failed"
    assert client.get(f"/api/experiments/{job_id}/report").status_code == 409
