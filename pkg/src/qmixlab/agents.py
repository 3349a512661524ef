"""Shared per-agent utility networks and decentralised action selection.

One parameter set serves every agent; inputs optionally carry the agent's
one-hot id and its previous action so the shared network can specialise.
The recurrent variant (linear -> ReLU -> GRU -> linear) summarises the
action-observation history in its hidden state; the feed-forward variant
drops the GRU for tasks where the observation already contains the state.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, Optional, Tuple

import numpy as np

from .autodiff import Tensor, relu
from .nets import GruLayer, Linear, copy_params, one_hot


@dataclass(frozen=True)
class AgentNetConfig:
    obs_dim: int
    n_actions: int
    n_agents: int
    hidden_dim: int = 64
    recurrent: bool = True
    use_last_action: bool = True
    use_agent_id: bool = True

    @property
    def input_dim(self) -> int:
        dim = self.obs_dim
        if self.use_last_action:
            dim += self.n_actions
        if self.use_agent_id:
            dim += self.n_agents
        return dim


class AgentNet:
    def __init__(self, cfg: AgentNetConfig, fc_in: Linear, gru: Optional[GruLayer],
                 fc_out: Linear) -> None:
        self.cfg = cfg
        self.fc_in = fc_in
        self.gru = gru
        self.fc_out = fc_out

    @classmethod
    def create(cls, cfg: AgentNetConfig, rng: np.random.Generator) -> "AgentNet":
        fc_in = Linear.create(rng, cfg.input_dim, cfg.hidden_dim)
        gru = GruLayer.create(rng, cfg.hidden_dim, cfg.hidden_dim) if cfg.recurrent else None
        fc_out = Linear.create(rng, cfg.hidden_dim, cfg.n_actions)
        return cls(cfg, fc_in, gru, fc_out)

    def initial_hidden(self, rows: int) -> np.ndarray:
        return np.zeros((rows, self.cfg.hidden_dim))

    def forward(self, inputs, hidden) -> Tuple[Tensor, object]:
        """Map (rows, input_dim) inputs to (rows, n_actions) action values.

        Returns the new hidden state alongside; for the feed-forward
        variant the hidden state passes through unchanged.
        """
        x = relu(self.fc_in(inputs))
        if self.gru is not None:
            h = self.gru(x, hidden)
            return self.fc_out(h), h
        return self.fc_out(x), hidden

    def parameters(self) -> Dict[str, Tensor]:
        params = self.fc_in.params("fc_in")
        if self.gru is not None:
            params.update(self.gru.params("gru"))
        params.update(self.fc_out.params("fc_out"))
        return params

    def clone(self) -> "AgentNet":
        other = AgentNet.create(self.cfg, np.random.default_rng(0))
        copy_params(other.parameters(), self.parameters())
        return other

    def load_from(self, other: "AgentNet") -> None:
        copy_params(self.parameters(), other.parameters())


def build_inputs(cfg: AgentNetConfig, obs: np.ndarray,
                 prev_actions: Optional[np.ndarray] = None) -> np.ndarray:
    """Assemble network inputs for a block of agents.

    ``obs`` has shape (..., n_agents, obs_dim); ``prev_actions`` (if the
    config uses them) has shape (..., n_agents) and -1 marks "no previous
    action" (start of episode), which encodes as a zero vector.
    """
    parts = [obs]
    if cfg.use_last_action:
        if prev_actions is None:
            prev_actions = -np.ones(obs.shape[:-1], dtype=np.int64)
        valid = prev_actions >= 0
        enc = one_hot(np.where(valid, prev_actions, 0), cfg.n_actions)
        enc *= valid[..., None]
        parts.append(enc)
    if cfg.use_agent_id:
        ids = one_hot(np.arange(cfg.n_agents), cfg.n_agents)
        ids = np.broadcast_to(ids, obs.shape[:-1] + (cfg.n_agents,))
        parts.append(ids)
    return np.concatenate(parts, axis=-1)


def masked_argmax(q_values: np.ndarray, avail: np.ndarray) -> np.ndarray:
    """Row-wise argmax over available actions; ties go to the lowest index."""
    if not avail.any(axis=-1).all():
        raise ValueError("an agent has no available action")
    masked = np.where(avail, q_values, -np.inf)
    return masked.argmax(axis=-1)


def select_actions(q_values: np.ndarray, avail: np.ndarray, epsilon: float,
                   rng: np.random.Generator) -> np.ndarray:
    """Independent epsilon-greedy choice per agent over available actions."""
    if not avail.any(axis=-1).all():
        raise ValueError("an agent has no available action")
    actions = masked_argmax(q_values, avail)
    if epsilon > 0.0:
        draws = rng.random(q_values.shape[0])
        for agent in np.flatnonzero(draws < epsilon):
            options = np.flatnonzero(avail[agent])
            actions[agent] = options[rng.integers(len(options))]
    return actions


@dataclass(frozen=True)
class EpsilonSchedule:
    """Linear anneal from ``start`` to ``end`` over ``anneal_steps`` env
    steps, constant afterwards."""

    start: float = 1.0
    end: float = 0.05
    anneal_steps: int = 50_000

    def __call__(self, t: int) -> float:
        if t < 0:
            raise ValueError(f"step count must be >= 0, got {t}")
        if self.anneal_steps <= 0 or t >= self.anneal_steps:
            return self.end
        return self.start + (self.end - self.start) * (t / self.anneal_steps)
