"""Two-step cooperative matrix game for two agents.

Step 1 pays nothing; agent 1's action alone picks which payoff matrix is
played in step 2 (action 0 leads to a flat all-7 matrix, action 1 to a
matrix whose only high payoff requires both agents to pick action 1).
The optimal episode return is 8.
"""
from __future__ import annotations

import numpy as np

from .base import Env, EnvSpec, StepResult

ACTION_A = 0
ACTION_B = 1

PHASE_FIRST = 0
PHASE_MATRIX_A = 1
PHASE_MATRIX_B = 2
PHASE_TERMINAL = 3

PHASE_NAMES = {PHASE_FIRST: "state_1", PHASE_MATRIX_A: "state_2a", PHASE_MATRIX_B: "state_2b"}

PAYOFF_A = np.array([[7.0, 7.0], [7.0, 7.0]])
PAYOFF_B = np.array([[0.0, 1.0], [1.0, 8.0]])

N_AGENTS = 2
N_ACTIONS = 2
N_PHASE_SLOTS = 3  # terminal needs no encoding; episodes end there


class TwoStepGame(Env):
    """Both agents observe the full state one-hot plus their own id one-hot."""

    def __init__(self, gamma: float = 0.99) -> None:
        self.spec = EnvSpec(
            n_agents=N_AGENTS,
            n_actions=N_ACTIONS,
            obs_dim=N_PHASE_SLOTS + N_AGENTS,
            state_dim=N_PHASE_SLOTS,
            episode_limit=2,
            gamma=gamma,
        )
        self._phase = PHASE_TERMINAL
        self._t = 0

    @property
    def phase(self) -> int:
        return self._phase

    def reset(self, seed=None):
        self._phase = PHASE_FIRST
        self._t = 0
        return self.get_obs(), self.get_state()

    @staticmethod
    def phase_state(phase: int) -> np.ndarray:
        state = np.zeros(N_PHASE_SLOTS)
        if phase != PHASE_TERMINAL:
            state[phase] = 1.0
        return state

    @staticmethod
    def phase_observations(phase: int) -> np.ndarray:
        state = TwoStepGame.phase_state(phase)
        obs = np.zeros((N_AGENTS, N_PHASE_SLOTS + N_AGENTS))
        for agent in range(N_AGENTS):
            obs[agent, :N_PHASE_SLOTS] = state
            obs[agent, N_PHASE_SLOTS + agent] = 1.0
        return obs

    def get_state(self) -> np.ndarray:
        return self.phase_state(self._phase)

    def get_obs(self) -> np.ndarray:
        return self.phase_observations(self._phase)

    def available_actions(self) -> np.ndarray:
        return np.ones((N_AGENTS, N_ACTIONS), dtype=bool)

    def step(self, joint_action) -> StepResult:
        if self._phase == PHASE_TERMINAL:
            raise RuntimeError("step() called on a finished episode; call reset()")
        self._check_available(joint_action)
        u1 = int(joint_action[0])
        u2 = int(joint_action[1])
        self._t += 1
        if self._phase == PHASE_FIRST:
            # agent 2's first action has no effect on the transition
            self._phase = PHASE_MATRIX_A if u1 == ACTION_A else PHASE_MATRIX_B
            return StepResult(reward=0.0, terminated=False, truncated=False)
        payoff = PAYOFF_A if self._phase == PHASE_MATRIX_A else PAYOFF_B
        self._phase = PHASE_TERMINAL
        return StepResult(reward=float(payoff[u1, u2]), terminated=True, truncated=False)
