"""Shared environment contract for cooperative partially observable tasks.

All environments are team-reward, discrete-action, and deterministic given
(seed, action sequence). Observations and global state are float64 vectors.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class UnavailableActionError(ValueError):
    """An agent tried to take an action its availability mask forbids."""

    def __init__(self, agent: int, action: int) -> None:
        super().__init__(f"agent {agent} chose unavailable action {action}")
        self.agent = agent
        self.action = action


@dataclass(frozen=True)
class EnvSpec:
    """Static dimensions of an environment instance."""

    n_agents: int
    n_actions: int
    obs_dim: int
    state_dim: int
    episode_limit: int
    gamma: float = 0.99

    def __post_init__(self) -> None:
        for field in ("n_agents", "n_actions", "obs_dim", "state_dim", "episode_limit"):
            if getattr(self, field) < 1:
                raise ValueError(f"EnvSpec.{field} must be >= 1, got {getattr(self, field)}")
        if not 0.0 <= self.gamma < 1.0:
            raise ValueError(f"EnvSpec.gamma must be in [0, 1), got {self.gamma}")


@dataclass(frozen=True)
class StepResult:
    """Outcome of one environment step; reward is shared by the whole team."""

    reward: float
    terminated: bool
    truncated: bool


class Env:
    """Interface implemented by the built-in environments.

    Subclasses must set ``spec`` and implement ``reset``, ``step``,
    ``get_obs``, ``get_state`` and ``available_actions``. A single instance
    is single-threaded; run independent instances for parallelism.
    """

    spec: EnvSpec

    def reset(self, seed=None):
        raise NotImplementedError

    def step(self, joint_action) -> StepResult:
        raise NotImplementedError

    def get_obs(self) -> np.ndarray:
        """Per-agent observations, shape (n_agents, obs_dim)."""
        raise NotImplementedError

    def get_state(self) -> np.ndarray:
        raise NotImplementedError

    def available_actions(self) -> np.ndarray:
        """Boolean mask, shape (n_agents, n_actions); each row has >= 1 True."""
        raise NotImplementedError

    def _check_available(self, joint_action) -> None:
        avail = self.available_actions()
        for agent, action in enumerate(joint_action):
            if not avail[agent, action]:
                raise UnavailableActionError(agent, int(action))
