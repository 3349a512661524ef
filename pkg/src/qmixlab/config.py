"""Experiment configuration: one frozen record fully determines a run.

Defaults are keyed by environment (the two tasks train at different
scales); any field can be overridden, and overrides are tracked so
``print-config`` can report the provenance of every effective value.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass, fields
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple

import yaml

ENV_NAMES = ("two_step", "micro_combat")
ALGORITHMS = ("iql", "vdn", "vdn_s", "qmix", "qmix_lin", "qmix_ns", "heuristic")

_COMMON_DEFAULTS: Dict[str, Any] = {
    "gamma": 0.99,
    "lr": 5e-4,
    "rms_alpha": 0.99,
    "rms_eps": 1e-5,
    "batch_size": 32,
    "train_steps_per_episode": 1,
    "agent_hidden_dim": 64,
    "hypernet_bias_hidden": 32,
    "eval_episodes": 20,
    "eval_period_episodes": 100,
}

_ENV_DEFAULTS: Dict[str, Dict[str, Any]] = {
    "two_step": {
        "scenario": None,
        "total_env_steps": 10_000,
        "buffer_capacity": 500,
        "target_update_episodes": 100,
        "eps_start": 1.0,
        "eps_end": 1.0,
        "eps_anneal_steps": 0,
        "mixing_embed_dim": 8,
        "recurrent": False,
        # one train step per environment timestep (episodes last 2 steps)
        "train_steps_per_episode": 2,
    },
    "micro_combat": {
        "scenario": "3m",
        "total_env_steps": 200_000,
        "buffer_capacity": 5000,
        "target_update_episodes": 200,
        "eps_start": 1.0,
        "eps_end": 0.05,
        "eps_anneal_steps": 50_000,
        "mixing_embed_dim": 32,
        "recurrent": True,
    },
}


class ConfigError(ValueError):
    """A configuration field failed validation; the message names it."""


@dataclass(frozen=True)
class ExperimentConfig:
    env: str
    algorithm: str
    seed: int = 0
    scenario: Optional[str] = None
    total_env_steps: int = 0
    gamma: float = 0.99
    lr: float = 5e-4
    rms_alpha: float = 0.99
    rms_eps: float = 1e-5
    buffer_capacity: int = 500
    batch_size: int = 32
    train_steps_per_episode: int = 1
    target_update_episodes: int = 100
    eps_start: float = 1.0
    eps_end: float = 0.05
    eps_anneal_steps: int = 0
    agent_hidden_dim: int = 64
    recurrent: bool = False
    mixing_embed_dim: int = 8
    hypernet_bias_hidden: int = 32
    eval_episodes: int = 20
    eval_period_episodes: int = 100
    overridden: Tuple[str, ...] = ()

    def validate(self) -> None:
        if self.env not in ENV_NAMES:
            raise ConfigError(f"env must be one of {ENV_NAMES}, got {self.env!r}")
        if self.algorithm not in ALGORITHMS:
            raise ConfigError(f"algorithm must be one of {ALGORITHMS}, got {self.algorithm!r}")
        if self.algorithm == "heuristic" and self.env != "micro_combat":
            raise ConfigError("algorithm 'heuristic' only applies to env 'micro_combat'")
        if not 0.0 <= self.gamma < 1.0:
            raise ConfigError(f"gamma must be in [0, 1), got {self.gamma}")
        for name in ("lr", "rms_eps"):
            if getattr(self, name) <= 0:
                raise ConfigError(f"{name} must be > 0, got {getattr(self, name)}")
        for name in ("total_env_steps", "buffer_capacity", "batch_size",
                     "train_steps_per_episode", "target_update_episodes",
                     "agent_hidden_dim", "mixing_embed_dim", "hypernet_bias_hidden",
                     "eval_episodes", "eval_period_episodes"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1, got {getattr(self, name)}")
        for name in ("eps_start", "eps_end"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ConfigError(f"{name} must be in [0, 1], got {getattr(self, name)}")
        if self.eps_anneal_steps < 0:
            raise ConfigError(f"eps_anneal_steps must be >= 0, got {self.eps_anneal_steps}")
        if self.seed < 0:
            raise ConfigError(f"seed must be >= 0, got {self.seed}")

    def to_dict(self) -> Dict[str, Any]:
        out = asdict(self)
        out["overridden"] = list(self.overridden)
        return out

    def effective_rows(self) -> List[Tuple[str, Any, str]]:
        """(field, value, provenance) triples for every effective value."""
        rows = []
        for f in fields(self):
            if f.name == "overridden":
                continue
            provenance = "override" if f.name in self.overridden else "default"
            rows.append((f.name, getattr(self, f.name), provenance))
        return rows


def build_config(env: str, algorithm: str, seed: int = 0,
                 overrides: Optional[Dict[str, Any]] = None) -> ExperimentConfig:
    """Merge environment defaults with user overrides and validate."""
    if env not in _ENV_DEFAULTS:
        raise ConfigError(f"env must be one of {ENV_NAMES}, got {env!r}")
    values: Dict[str, Any] = dict(_COMMON_DEFAULTS)
    values.update(_ENV_DEFAULTS[env])
    known = {f.name for f in fields(ExperimentConfig)} - {"env", "algorithm", "seed", "overridden"}
    overridden = []
    for key, value in (overrides or {}).items():
        if key in ("env", "algorithm", "seed"):
            raise ConfigError(f"{key} is a positional setting, not an override")
        if key not in known:
            raise ConfigError(f"unknown config field {key!r}")
        if value != values.get(key):
            overridden.append(key)
        values[key] = value
    cfg = ExperimentConfig(env=env, algorithm=algorithm, seed=seed,
                           overridden=tuple(sorted(overridden)), **values)
    cfg.validate()
    return cfg


def config_from_dict(doc: Dict[str, Any]) -> ExperimentConfig:
    doc = dict(doc)
    doc.pop("overridden", None)
    env = doc.pop("env", None)
    algorithm = doc.pop("algorithm", None)
    seed = doc.pop("seed", 0)
    if env is None or algorithm is None:
        raise ConfigError("config needs both 'env' and 'algorithm'")
    return build_config(env, algorithm, seed=int(seed), overrides=doc)


def load_config(path) -> ExperimentConfig:
    """Read a nested key/value config document (YAML, JSON-compatible)."""
    doc = yaml.safe_load(Path(path).read_text())
    if not isinstance(doc, dict):
        raise ConfigError(f"{path}: expected a mapping at the top level")
    return config_from_dict(doc)


def save_config(config: ExperimentConfig, path) -> None:
    Path(path).write_text(yaml.safe_dump(config.to_dict(), sort_keys=False))
