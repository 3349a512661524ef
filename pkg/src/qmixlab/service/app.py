"""HTTP front end: submit experiments, poll jobs, fetch metrics, evaluate
checkpoints and inspect effective configuration."""
from __future__ import annotations

import tempfile
from pathlib import Path
from typing import Optional

from fastapi import FastAPI, HTTPException
from fastapi.responses import PlainTextResponse

from .. import __version__
from ..config import ConfigError
from ..runner import METRICS_FILE
from . import schemas
from .core import JobManager, effective_config, evaluate_checkpoint, qtot_tables


def create_app(out_root: Optional[str] = None) -> FastAPI:
    app = FastAPI(title="qmixlab", version=__version__)
    root = out_root or tempfile.mkdtemp(prefix="qmixlab-jobs-")
    manager = JobManager(root)
    app.state.jobs = manager

    @app.get("/health", response_model=schemas.HealthResponse)
    def health():
        return schemas.HealthResponse(status="ok", version=__version__)

    @app.post("/experiments", response_model=schemas.JobInfo, status_code=202)
    def submit(req: schemas.RunRequest):
        try:
            return manager.submit(req)
        except ConfigError as exc:
            raise HTTPException(status_code=422, detail=str(exc))

    @app.get("/experiments", response_model=schemas.JobList)
    def list_jobs():
        return schemas.JobList(jobs=manager.list())

    @app.get("/experiments/{job_id}", response_model=schemas.JobInfo)
    def job_info(job_id: str):
        info = manager.get(job_id)
        if info is None:
            raise HTTPException(status_code=404, detail=f"no such job: {job_id}")
        return info

    @app.get("/experiments/{job_id}/metrics.csv", response_class=PlainTextResponse)
    def job_metrics(job_id: str):
        info = manager.get(job_id)
        if info is None:
            raise HTTPException(status_code=404, detail=f"no such job: {job_id}")
        if info.status != "done" or info.out_dir is None:
            raise HTTPException(status_code=409, detail=f"job {job_id} is {info.status}")
        return Path(info.out_dir, METRICS_FILE).read_text()

    @app.post("/evaluations", response_model=schemas.EvalResponse)
    def evaluate(req: schemas.EvalRequest):
        try:
            return evaluate_checkpoint(req)
        except (FileNotFoundError, ValueError) as exc:
            raise HTTPException(status_code=422, detail=str(exc))

    @app.post("/qtot-tables", response_model=schemas.QtotResponse)
    def qtot(req: schemas.QtotRequest):
        try:
            return qtot_tables(req)
        except (FileNotFoundError, ValueError) as exc:
            raise HTTPException(status_code=422, detail=str(exc))

    @app.get("/config/defaults", response_model=schemas.ConfigResponse)
    def config_defaults(env: str, algorithm: str, seed: int = 0):
        try:
            return effective_config(env, algorithm, seed=seed)
        except ConfigError as exc:
            raise HTTPException(status_code=422, detail=str(exc))

    return app


app = create_app()
