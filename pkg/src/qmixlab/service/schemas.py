"""Request/response models for the experiment service."""
from __future__ import annotations

from typing import Any, Dict, List, Optional

from pydantic import BaseModel, Field


class RunRequest(BaseModel):
    env: str
    algorithm: str
    seed: int = 0
    overrides: Dict[str, Any] = Field(default_factory=dict)


class EvalPointModel(BaseModel):
    episode: int
    env_steps: int
    metrics: Dict[str, float]
    returns: List[float]


class ReportModel(BaseModel):
    env: str
    algorithm: str
    scenario: Optional[str] = None
    seed: int
    points: List[EvalPointModel]
    baselines: Dict[str, float] = Field(default_factory=dict)


class JobInfo(BaseModel):
    job_id: str
    status: str  # queued | running | done | error
    env: str
    algorithm: str
    seed: int
    detail: Optional[str] = None
    out_dir: Optional[str] = None
    report: Optional[ReportModel] = None


class JobList(BaseModel):
    jobs: List[JobInfo]


class EvalRequest(BaseModel):
    checkpoint: str
    episodes: int = 20
    seed: int = 0


class EvalResponse(BaseModel):
    env: str
    algorithm: str
    episodes: int
    mean_return: float
    win_rate: Optional[float] = None
    returns: List[float]


class QtotRequest(BaseModel):
    checkpoint: str


class QtotResponse(BaseModel):
    kind: str  # q_tot | per_agent
    states: List[str]
    tables: Dict[str, List[List[float]]]


class ConfigRow(BaseModel):
    name: str
    value: Any
    provenance: str  # default | override


class ConfigResponse(BaseModel):
    env: str
    algorithm: str
    seed: int
    rows: List[ConfigRow]


class HealthResponse(BaseModel):
    status: str
    version: str
