"""Episode replay, TD-target construction and the end-to-end training step.

Training operates on whole episodes: a batch is padded to the longest
episode it contains, agents are unrolled through time with hidden states
reset at episode starts, chosen per-agent values are mixed into Q_tot, and
the squared TD error is averaged over real (filled) steps only. Targets
come from frozen copies of the online networks that are hard-synced on an
episode schedule.
"""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass
from typing import Deque, Dict, List, Optional, Sequence

import numpy as np

from .agents import AgentNet, build_inputs
from .autodiff import Tape, concat_rows, constant, mul, relu, reshape, slice_rows, sub, tsum
from .mixers import Mixer
from .nets import one_hot
from .optim import RmsProp, TrainingDivergenceError


@dataclass
class Episode:
    """One complete episode; observation-like arrays carry T+1 slots so the
    bootstrap step after the last transition is available."""

    obs: np.ndarray         # (T+1, n_agents, obs_dim)
    state: np.ndarray       # (T+1, state_dim)
    avail: np.ndarray       # (T+1, n_agents, n_actions) bool
    actions: np.ndarray     # (T, n_agents) int64
    rewards: np.ndarray     # (T,)
    terminated: np.ndarray  # (T,) bool; False on a step cut off by the limit

    @property
    def length(self) -> int:
        return self.actions.shape[0]

    def validate(self) -> None:
        t = self.length
        if not (self.obs.shape[0] == self.state.shape[0] == self.avail.shape[0] == t + 1):
            raise ValueError("episode arrays disagree on length")
        if not (self.rewards.shape[0] == self.terminated.shape[0] == t):
            raise ValueError("episode arrays disagree on length")


@dataclass
class EpisodeBatch:
    obs: np.ndarray         # (B, T+1, n, obs_dim)
    state: np.ndarray       # (B, T+1, state_dim)
    avail: np.ndarray       # (B, T+1, n, A) bool; padding rows are all-True
    actions: np.ndarray     # (B, T, n)
    rewards: np.ndarray     # (B, T)
    terminated: np.ndarray  # (B, T) float64
    filled: np.ndarray      # (B, T) float64, prefix mask of real steps

    @property
    def batch_size(self) -> int:
        return self.obs.shape[0]

    @property
    def max_length(self) -> int:
        return self.actions.shape[1]

    @classmethod
    def from_episodes(cls, episodes: Sequence[Episode]) -> "EpisodeBatch":
        n_batch = len(episodes)
        t_max = max(ep.length for ep in episodes)
        _, n_agents, obs_dim = episodes[0].obs.shape
        state_dim = episodes[0].state.shape[1]
        n_actions = episodes[0].avail.shape[2]
        obs = np.zeros((n_batch, t_max + 1, n_agents, obs_dim))
        state = np.zeros((n_batch, t_max + 1, state_dim))
        # all-True padding keeps target argmaxes finite; the filled mask
        # removes padded steps from the loss
        avail = np.ones((n_batch, t_max + 1, n_agents, n_actions), dtype=bool)
        actions = np.zeros((n_batch, t_max, n_agents), dtype=np.int64)
        rewards = np.zeros((n_batch, t_max))
        terminated = np.zeros((n_batch, t_max))
        filled = np.zeros((n_batch, t_max))
        for i, ep in enumerate(episodes):
            t = ep.length
            obs[i, : t + 1] = ep.obs
            state[i, : t + 1] = ep.state
            avail[i, : t + 1] = ep.avail
            actions[i, :t] = ep.actions
            rewards[i, :t] = ep.rewards
            terminated[i, :t] = ep.terminated
            filled[i, :t] = 1.0
        return cls(obs, state, avail, actions, rewards, terminated, filled)


class ReplayBuffer:
    """Ring of the most recent episodes with uniform with-replacement sampling."""

    def __init__(self, capacity: int, episode_limit: int) -> None:
        if capacity < 1:
            raise ValueError("capacity must be >= 1")
        self.capacity = capacity
        self.episode_limit = episode_limit
        self._episodes: Deque[Episode] = deque(maxlen=capacity)

    def __len__(self) -> int:
        return len(self._episodes)

    def add(self, episode: Episode) -> None:
        episode.validate()
        if episode.length > self.episode_limit:
            raise ValueError(
                f"episode of length {episode.length} exceeds the limit {self.episode_limit}"
            )
        self._episodes.append(episode)

    def sample(self, batch_size: int, rng: np.random.Generator) -> EpisodeBatch:
        if not self._episodes:
            raise ValueError("cannot sample from an empty replay buffer")
        idx = rng.integers(0, len(self._episodes), size=batch_size)
        return EpisodeBatch.from_episodes([self._episodes[i] for i in idx])

    def episodes(self) -> List[Episode]:
        return list(self._episodes)


def _prev_actions(batch: EpisodeBatch, n_slots: int) -> np.ndarray:
    """Previous joint actions per slot; -1 encodes "episode start"."""
    prev = -np.ones((batch.batch_size, n_slots, batch.actions.shape[2]), dtype=np.int64)
    prev[:, 1:n_slots] = batch.actions[:, : n_slots - 1]
    return prev


class Learner:
    """Owns the online/target networks and optimizer state for one run."""

    def __init__(self, agent: AgentNet, mixer: Optional[Mixer], *,
                 gamma: float = 0.99, lr: float = 5e-4, rms_alpha: float = 0.99,
                 rms_eps: float = 1e-5, batch_size: int = 32) -> None:
        self.agent = agent
        self.mixer = mixer
        self.gamma = gamma
        self.batch_size = batch_size
        self.target_agent = agent.clone()
        self.target_mixer = mixer.clone() if mixer is not None else None
        self.optimizer = RmsProp(self.parameters(), lr=lr, alpha=rms_alpha, eps=rms_eps)

    @property
    def is_iql(self) -> bool:
        return self.mixer is None

    def parameters(self):
        params = {f"agent.{k}": p for k, p in self.agent.parameters().items()}
        if self.mixer is not None:
            params.update({f"mixer.{k}": p for k, p in self.mixer.parameters().items()})
        return params

    def target_parameters(self):
        params = {f"agent.{k}": p for k, p in self.target_agent.parameters().items()}
        if self.target_mixer is not None:
            params.update({f"mixer.{k}": p for k, p in self.target_mixer.parameters().items()})
        return params

    def sync_target(self) -> None:
        self.target_agent.load_from(self.agent)
        if self.target_mixer is not None:
            self.target_mixer.load_from(self.mixer)

    # -- forward machinery ----------------------------------------------

    def _unroll(self, net: AgentNet, batch: EpisodeBatch, n_slots: int):
        """Q-values for slots 0..n_slots-1, flattened slot-major.

        Returns a Tensor of shape (n_slots * B * n_agents, n_actions); row
        index is ((t * B) + b) * n_agents + a. Hidden states start at zero
        (episode starts) and are carried across slots inside the batch.
        """
        n_batch = batch.batch_size
        n_agents = batch.actions.shape[2]
        cfg = net.cfg
        inputs = build_inputs(cfg, batch.obs[:, :n_slots], _prev_actions(batch, n_slots))
        flat = np.ascontiguousarray(inputs.transpose(1, 0, 2, 3)).reshape(-1, cfg.input_dim)
        x_all = relu(net.fc_in(flat))
        if net.gru is None:
            return net.fc_out(x_all)
        rows_per_slot = n_batch * n_agents
        hidden = net.initial_hidden(rows_per_slot)
        states = []
        for t in range(n_slots):
            x_t = slice_rows(x_all, t * rows_per_slot, (t + 1) * rows_per_slot)
            hidden = net.gru(x_t, hidden)
            states.append(hidden)
        return net.fc_out(concat_rows(states))

    def compute_targets(self, batch: EpisodeBatch) -> np.ndarray:
        """TD targets from the frozen networks.

        Factored heads get one y per step, shape (B, T); independent
        learners get per-agent targets, shape (B, T, n_agents). Terminated
        steps do not bootstrap; limit-truncated steps do.
        """
        n_batch, t_max = batch.rewards.shape
        n_agents = batch.actions.shape[2]
        q_all = self._unroll(self.target_agent, batch, t_max + 1).data
        q_next = q_all.reshape(t_max + 1, n_batch, n_agents, -1)[1:]
        avail_next = batch.avail[:, 1: t_max + 1].transpose(1, 0, 2, 3)
        masked = np.where(avail_next, q_next, -np.inf)
        rewards = batch.rewards.T
        carry = self.gamma * (1.0 - batch.terminated.T)
        if self.is_iql:
            y = rewards[:, :, None] + carry[:, :, None] * masked.max(axis=-1)
            return y.transpose(1, 0, 2)
        greedy = masked.argmax(axis=-1)
        chosen = np.take_along_axis(q_next, greedy[..., None], axis=-1)[..., 0]
        state_next = np.ascontiguousarray(
            batch.state[:, 1: t_max + 1].transpose(1, 0, 2)
        ).reshape(t_max * n_batch, -1)
        q_tot = self.target_mixer.forward(
            constant(chosen.reshape(t_max * n_batch, n_agents)), state_next
        ).data.reshape(t_max, n_batch)
        return (rewards + carry * q_tot).T

    def compute_loss(self, batch: EpisodeBatch, targets: np.ndarray):
        """Squared TD error at the taken actions, averaged over filled steps.

        Must run inside an active Tape for gradients to be recorded.
        """
        n_batch, t_max = batch.rewards.shape
        n_agents = batch.actions.shape[2]
        q_all = self._unroll(self.agent, batch, t_max)
        taken = np.ascontiguousarray(batch.actions.transpose(1, 0, 2)).ravel()
        onehot = one_hot(taken, q_all.data.shape[1])
        chosen_flat = tsum(mul(q_all, onehot), axis=1)
        filled = batch.filled.T.ravel()
        if self.is_iql:
            y = np.ascontiguousarray(targets.transpose(1, 0, 2)).ravel()
            mask = np.repeat(filled, n_agents)
            count = mask.sum() or 1.0
        else:
            chosen = reshape(chosen_flat, (t_max * n_batch, n_agents))
            states = np.ascontiguousarray(
                batch.state[:, :t_max].transpose(1, 0, 2)
            ).reshape(t_max * n_batch, -1)
            chosen_flat = self.mixer.forward(chosen, states)
            y = targets.T.ravel()
            mask = filled
            count = mask.sum() or 1.0
        diff = sub(chosen_flat, y)
        masked_sq = mul(mul(diff, diff), mask)
        return mul(tsum(masked_sq), 1.0 / float(count))

    # -- training ---------------------------------------------------------

    def train_on_batch(self, batch: EpisodeBatch) -> Dict[str, float]:
        targets = self.compute_targets(batch)
        params = self.parameters()
        self.optimizer.zero_grad()
        with Tape() as tape:
            loss = self.compute_loss(batch, targets)
            if not np.isfinite(loss.data):
                raise TrainingDivergenceError(
                    f"loss became non-finite ({loss.item()!r}); aborting the run"
                )
            tape.backward(loss, params)
        grad_norm = self.optimizer.step()
        return {"loss": loss.item(), "grad_norm": grad_norm}

    def train_step(self, buffer: ReplayBuffer, rng: np.random.Generator) -> Dict[str, float]:
        if len(buffer) < self.batch_size:
            raise ValueError(
                f"buffer holds {len(buffer)} episodes; {self.batch_size} needed to train"
            )
        return self.train_on_batch(buffer.sample(self.batch_size, rng))
