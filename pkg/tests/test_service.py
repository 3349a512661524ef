import time

import pytest
from fastapi.testclient import TestClient

from qmixlab import build_config, run_experiment
from qmixlab.service.app import create_app

TINY = {"total_env_steps": 200, "buffer_capacity": 30, "eval_episodes": 2,
        "eval_period_episodes": 100}


@pytest.fixture
def client(tmp_path):
    app = create_app(out_root=tmp_path / "jobs")
    with TestClient(app) as c:
        yield c


def wait_done(client, job_id, timeout=120.0):
    deadline = time.time() + timeout
    while time.time() < deadline:
        info = client.get(f"/experiments/{job_id}").json()
        if info["status"] in ("done", "error"):
            return info
        time.sleep(0.05)
    raise TimeoutError(f"job {job_id} did not finish")


def test_health(client):
    body = client.get("/health").json()
    assert body["status"] == "ok"


def test_submit_and_poll_experiment(client):
    resp = client.post("/experiments", json={
        "env": "two_step", "algorithm": "vdn", "seed": 1, "overrides": TINY})
    assert resp.status_code == 202
    job = resp.json()
    assert job["status"] in ("queued", "running")
    info = wait_done(client, job["job_id"])
    assert info["status"] == "done", info.get("detail")
    assert info["report"]["algorithm"] == "vdn"
    assert len(info["report"]["points"]) >= 2
    listing = client.get("/experiments").json()
    assert any(j["job_id"] == job["job_id"] for j in listing["jobs"])


def test_metrics_csv_endpoint(client):
    job = client.post("/experiments", json={
        "env": "two_step", "algorithm": "iql", "seed": 2, "overrides": TINY}).json()
    wait_done(client, job["job_id"])
    csv_text = client.get(f"/experiments/{job['job_id']}/metrics.csv").text
    header = csv_text.splitlines()[0]
    assert header == "episode,env_steps,metric_name,value,seed,algorithm,scenario"


def test_metrics_csv_conflict_while_running(client):
    job = client.post("/experiments", json={
        "env": "two_step", "algorithm": "vdn", "seed": 3,
        "overrides": dict(TINY, total_env_steps=4000)}).json()
    resp = client.get(f"/experiments/{job['job_id']}/metrics.csv")
    assert resp.status_code in (409, 200)  # likely still running
    wait_done(client, job["job_id"])


def test_unknown_job_404(client):
    assert client.get("/experiments/exp-9999").status_code == 404


def test_invalid_config_rejected(client):
    resp = client.post("/experiments", json={
        "env": "two_step", "algorithm": "alphazero"})
    assert resp.status_code == 422


def test_eval_endpoint_roundtrip(client, tmp_path):
    run_dir = tmp_path / "trained"
    cfg = build_config("two_step", "vdn", seed=4, overrides=TINY)
    run_experiment(cfg, out_dir=run_dir)
    resp = client.post("/evaluations", json={
        "checkpoint": str(run_dir / "checkpoint.bin"), "episodes": 3, "seed": 0})
    assert resp.status_code == 200
    body = resp.json()
    assert body["env"] == "two_step" and body["episodes"] == 3
    assert body["win_rate"] is None
    assert len(body["returns"]) == 3


def test_qtot_endpoint(client, tmp_path):
    run_dir = tmp_path / "trained"
    cfg = build_config("two_step", "qmix", seed=5, overrides=TINY)
    run_experiment(cfg, out_dir=run_dir)
    resp = client.post("/qtot-tables", json={"checkpoint": str(run_dir)})
    assert resp.status_code == 200
    body = resp.json()
    assert body["kind"] == "q_tot"
    assert body["states"] == ["state_1", "state_2a", "state_2b"]
    assert len(body["tables"]["state_2b"]) == 2


def test_qtot_endpoint_rejects_combat_checkpoint(client, tmp_path):
    run_dir = tmp_path / "combat"
    cfg = build_config("micro_combat", "vdn", seed=1, overrides={
        "total_env_steps": 60, "buffer_capacity": 10, "batch_size": 4,
        "eval_episodes": 1, "eval_period_episodes": 50})
    run_experiment(cfg, out_dir=run_dir)
    resp = client.post("/qtot-tables", json={"checkpoint": str(run_dir)})
    assert resp.status_code == 422


def test_config_defaults_endpoint(client):
    resp = client.get("/config/defaults", params={"env": "micro_combat",
                                                  "algorithm": "qmix"})
    assert resp.status_code == 200
    rows = {r["name"]: r for r in resp.json()["rows"]}
    assert rows["buffer_capacity"]["value"] == 5000
    assert rows["buffer_capacity"]["provenance"] == "default"
    assert client.get("/config/defaults",
                      params={"env": "nope", "algorithm": "qmix"}).status_code == 422
