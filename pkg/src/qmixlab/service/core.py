"""Service-layer operations shared by the HTTP app and the local CLI.

Each function adapts between the wire models and the core library, so the
CLI can run the same code in-process that the server runs behind HTTP.
"""
from __future__ import annotations

import threading
from pathlib import Path
from typing import Dict, List, Optional

import numpy as np

from ..config import ExperimentConfig, build_config
from ..runner import (
    EvalReport,
    RunResult,
    dump_qtot_table,
    evaluate_policy,
    load_networks,
    load_run,
    run_experiment,
)
from . import schemas


def report_to_model(report: EvalReport) -> schemas.ReportModel:
    return schemas.ReportModel(
        env=report.env,
        algorithm=report.algorithm,
        scenario=report.scenario,
        seed=report.seed,
        points=[schemas.EvalPointModel(episode=p.episode, env_steps=p.env_steps,
                                       metrics=p.metrics, returns=p.returns)
                for p in report.points],
        baselines=report.baselines,
    )


def config_from_request(req: schemas.RunRequest) -> ExperimentConfig:
    return build_config(req.env, req.algorithm, seed=req.seed, overrides=dict(req.overrides))


def run_to_completion(config: ExperimentConfig, out_dir) -> RunResult:
    return run_experiment(config, out_dir=out_dir)


def evaluate_checkpoint(req: schemas.EvalRequest) -> schemas.EvalResponse:
    config, params = load_run(req.checkpoint)
    agent, _ = load_networks(config, params)
    from ..runner import make_env  # local import avoids a cycle at module load

    env = make_env(config)
    seeds = [int(s) for s in
             np.random.default_rng(req.seed).integers(0, 2**31 - 1, size=req.episodes)]
    result = evaluate_policy(env, agent, seeds)
    win_rate = float(result["win_rate"]) if config.env == "micro_combat" else None
    return schemas.EvalResponse(
        env=config.env,
        algorithm=config.algorithm,
        episodes=req.episodes,
        mean_return=float(result["mean_return"]),
        win_rate=win_rate,
        returns=[float(r) for r in result["returns"]],
    )


def qtot_tables(req: schemas.QtotRequest) -> schemas.QtotResponse:
    config, params = load_run(req.checkpoint)
    if config.env != "two_step":
        raise ValueError("q-table dumps require a two-step checkpoint")
    agent, mixer = load_networks(config, params)
    dump = dump_qtot_table(agent, mixer)
    return schemas.QtotResponse(kind=dump["kind"], states=dump["states"], tables=dump["tables"])


def effective_config(env: str, algorithm: str, seed: int = 0,
                     overrides: Optional[Dict] = None) -> schemas.ConfigResponse:
    config = build_config(env, algorithm, seed=seed, overrides=overrides or {})
    rows = [schemas.ConfigRow(name=n, value=v, provenance=p)
            for n, v, p in config.effective_rows()]
    return schemas.ConfigResponse(env=env, algorithm=algorithm, seed=seed, rows=rows)


class JobManager:
    """Tracks experiment jobs running on background threads."""

    def __init__(self, out_root) -> None:
        self.out_root = Path(out_root)
        self.out_root.mkdir(parents=True, exist_ok=True)
        self._lock = threading.Lock()
        self._jobs: Dict[str, schemas.JobInfo] = {}
        self._threads: Dict[str, threading.Thread] = {}
        self._counter = 0

    def submit(self, req: schemas.RunRequest) -> schemas.JobInfo:
        config = config_from_request(req)
        with self._lock:
            self._counter += 1
            job_id = f"exp-{self._counter:04d}"
            info = schemas.JobInfo(job_id=job_id, status="queued", env=config.env,
                                   algorithm=config.algorithm, seed=config.seed)
            self._jobs[job_id] = info
        thread = threading.Thread(target=self._run, args=(job_id, config), daemon=True)
        self._threads[job_id] = thread
        thread.start()
        return info

    def _run(self, job_id: str, config: ExperimentConfig) -> None:
        out_dir = self.out_root / job_id
        with self._lock:
            self._jobs[job_id] = self._jobs[job_id].model_copy(
                update={"status": "running", "out_dir": str(out_dir)})
        try:
            result = run_to_completion(config, out_dir)
            update = {"status": "done", "report": report_to_model(result.report)}
        except Exception as exc:  # surfaced to the client instead of dying silently
            update = {"status": "error", "detail": f"{type(exc).__name__}: {exc}"}
        with self._lock:
            self._jobs[job_id] = self._jobs[job_id].model_copy(update=update)

    def get(self, job_id: str) -> Optional[schemas.JobInfo]:
        with self._lock:
            return self._jobs.get(job_id)

    def list(self) -> List[schemas.JobInfo]:
        with self._lock:
            return list(self._jobs.values())

    def wait(self, job_id: str, timeout: Optional[float] = None) -> Optional[schemas.JobInfo]:
        thread = self._threads.get(job_id)
        if thread is not None:
            thread.join(timeout)
        return self.get(job_id)
