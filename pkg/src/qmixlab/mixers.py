"""Joint-value heads combining per-agent chosen values into Q_tot.

Every head except the plain sum can condition on the global state, and all
of them are monotone non-decreasing in each agent's value: mixing weights
pass through an absolute-value activation, so a global greedy joint action
decomposes into per-agent greedy choices.

Heads:
  * ``vdn``       plain sum
  * ``vdn_s``     sum plus a state-dependent bias (2-layer ReLU network)
  * ``qmix``      two-layer ELU mixing net whose weights/biases come from
                  state-conditioned hypernetworks
  * ``qmix_lin``  state-conditioned weighted sum (no hidden layer)
  * ``qmix_ns``   the qmix mixing net with directly learned, state-free
                  weights
Independent learners use no head at all (``build_mixer`` returns None).
"""
from __future__ import annotations

from typing import Dict, Optional, Tuple

import numpy as np

from .autodiff import Tensor, abs_, add, bvm, constant, elu, matmul, mul, relu, reshape, tsum
from .nets import Linear, copy_params
from .agents import masked_argmax


class Mixer:
    name = "base"

    def forward(self, chosen: Tensor, state) -> Tensor:
        """Combine chosen values (B, n) and state (B, state_dim) into (B,)."""
        raise NotImplementedError

    def parameters(self) -> Dict[str, Tensor]:
        return {}

    def clone(self) -> "Mixer":
        other = self.__class__(*self._ctor_args())
        copy_params(other.parameters(), self.parameters())
        return other

    def load_from(self, other: "Mixer") -> None:
        copy_params(self.parameters(), other.parameters())

    def _ctor_args(self) -> tuple:
        raise NotImplementedError


class VdnMixer(Mixer):
    """Q_tot is the plain sum of the agents' chosen values."""

    name = "vdn"

    def __init__(self) -> None:
        pass

    def forward(self, chosen: Tensor, state=None) -> Tensor:
        return tsum(chosen, axis=1)

    def clone(self) -> "Mixer":
        return VdnMixer()

    def load_from(self, other: "Mixer") -> None:
        pass


class VdnSMixer(Mixer):
    """Sum of agent values plus an unconstrained state-dependent bias."""

    name = "vdn_s"

    def __init__(self, state_dim: int, bias_hidden: int = 32,
                 rng: Optional[np.random.Generator] = None) -> None:
        rng = rng if rng is not None else np.random.default_rng(0)
        self.state_dim = state_dim
        self.bias_hidden = bias_hidden
        self.sb1 = Linear.create(rng, state_dim, bias_hidden)
        self.sb2 = Linear.create(rng, bias_hidden, 1)

    def _ctor_args(self):
        return (self.state_dim, self.bias_hidden)

    def forward(self, chosen: Tensor, state) -> Tensor:
        state = constant(state) if not isinstance(state, Tensor) else state
        bias = self.sb2(relu(self.sb1(state)))
        return add(tsum(chosen, axis=1), reshape(bias, (bias.data.shape[0],)))

    def parameters(self) -> Dict[str, Tensor]:
        return {**self.sb1.params("sb1"), **self.sb2.params("sb2")}


class QmixMixer(Mixer):
    """Monotone two-layer mixing network fed by state hypernetworks.

    The weight hypernetworks are single linear layers whose outputs pass
    through abs(); the first-layer bias is a single linear layer and the
    final bias a two-layer ReLU network. The mixing nonlinearity is ELU.
    """

    name = "qmix"

    def __init__(self, n_agents: int, state_dim: int, embed_dim: int = 32,
                 bias_hidden: int = 32, rng: Optional[np.random.Generator] = None) -> None:
        rng = rng if rng is not None else np.random.default_rng(0)
        self.n_agents = n_agents
        self.state_dim = state_dim
        self.embed_dim = embed_dim
        self.bias_hidden = bias_hidden
        self.hyper_w1 = Linear.create(rng, state_dim, n_agents * embed_dim)
        self.hyper_b1 = Linear.create(rng, state_dim, embed_dim)
        self.hyper_w2 = Linear.create(rng, state_dim, embed_dim)
        self.hyper_b2_in = Linear.create(rng, state_dim, bias_hidden)
        self.hyper_b2_out = Linear.create(rng, bias_hidden, 1)

    def _ctor_args(self):
        return (self.n_agents, self.state_dim, self.embed_dim, self.bias_hidden)

    def forward(self, chosen: Tensor, state) -> Tensor:
        state = constant(state) if not isinstance(state, Tensor) else state
        batch = chosen.data.shape[0]
        w1 = reshape(abs_(self.hyper_w1(state)), (batch, self.n_agents, self.embed_dim))
        b1 = self.hyper_b1(state)
        hidden = elu(add(bvm(chosen, w1), b1))
        w2 = abs_(self.hyper_w2(state))
        b2 = self.hyper_b2_out(relu(self.hyper_b2_in(state)))
        return add(tsum(mul(hidden, w2), axis=1), reshape(b2, (batch,)))

    def parameters(self) -> Dict[str, Tensor]:
        out: Dict[str, Tensor] = {}
        out.update(self.hyper_w1.params("hyper_w1"))
        out.update(self.hyper_b1.params("hyper_b1"))
        out.update(self.hyper_w2.params("hyper_w2"))
        out.update(self.hyper_b2_in.params("hyper_b2_in"))
        out.update(self.hyper_b2_out.params("hyper_b2_out"))
        return out


class QmixLinMixer(Mixer):
    """State-conditioned weighted sum: abs hypernet weights, 2-layer bias."""

    name = "qmix_lin"

    def __init__(self, n_agents: int, state_dim: int, bias_hidden: int = 32,
                 rng: Optional[np.random.Generator] = None) -> None:
        rng = rng if rng is not None else np.random.default_rng(0)
        self.n_agents = n_agents
        self.state_dim = state_dim
        self.bias_hidden = bias_hidden
        self.hyper_w = Linear.create(rng, state_dim, n_agents)
        self.hyper_b_in = Linear.create(rng, state_dim, bias_hidden)
        self.hyper_b_out = Linear.create(rng, bias_hidden, 1)

    def _ctor_args(self):
        return (self.n_agents, self.state_dim, self.bias_hidden)

    def forward(self, chosen: Tensor, state) -> Tensor:
        state = constant(state) if not isinstance(state, Tensor) else state
        batch = chosen.data.shape[0]
        weights = abs_(self.hyper_w(state))
        bias = self.hyper_b_out(relu(self.hyper_b_in(state)))
        return add(tsum(mul(chosen, weights), axis=1), reshape(bias, (batch,)))

    def parameters(self) -> Dict[str, Tensor]:
        out: Dict[str, Tensor] = {}
        out.update(self.hyper_w.params("hyper_w"))
        out.update(self.hyper_b_in.params("hyper_b_in"))
        out.update(self.hyper_b_out.params("hyper_b_out"))
        return out


class QmixNsMixer(Mixer):
    """The qmix mixing net with directly learned weights and no state path.

    abs() is applied to the weight matrices only; biases stay free.
    """

    name = "qmix_ns"

    def __init__(self, n_agents: int, embed_dim: int = 32,
                 rng: Optional[np.random.Generator] = None) -> None:
        rng = rng if rng is not None else np.random.default_rng(0)
        self.n_agents = n_agents
        self.embed_dim = embed_dim
        from .autodiff import parameter
        from .nets import uniform_fan_in
        self.w1 = parameter(uniform_fan_in(rng, (n_agents, embed_dim), n_agents))
        self.b1 = parameter(np.zeros(embed_dim))
        self.w2 = parameter(uniform_fan_in(rng, (embed_dim, 1), embed_dim))
        self.b2 = parameter(np.zeros(1))

    def _ctor_args(self):
        return (self.n_agents, self.embed_dim)

    def forward(self, chosen: Tensor, state=None) -> Tensor:
        batch = chosen.data.shape[0]
        hidden = elu(add(matmul(chosen, abs_(self.w1)), self.b1))
        out = add(matmul(hidden, abs_(self.w2)), self.b2)
        return reshape(out, (batch,))

    def parameters(self) -> Dict[str, Tensor]:
        return {"w1": self.w1, "b1": self.b1, "w2": self.w2, "b2": self.b2}


MIXER_NAMES = ("iql", "vdn", "vdn_s", "qmix", "qmix_lin", "qmix_ns")


def build_mixer(algorithm: str, n_agents: int, state_dim: int, embed_dim: int = 32,
                bias_hidden: int = 32,
                rng: Optional[np.random.Generator] = None) -> Optional[Mixer]:
    """Instantiate the joint-value head for an algorithm; None for IQL."""
    if algorithm == "iql":
        return None
    if algorithm == "vdn":
        return VdnMixer()
    if algorithm == "vdn_s":
        return VdnSMixer(state_dim, bias_hidden, rng)
    if algorithm == "qmix":
        return QmixMixer(n_agents, state_dim, embed_dim, bias_hidden, rng)
    if algorithm == "qmix_lin":
        return QmixLinMixer(n_agents, state_dim, bias_hidden, rng)
    if algorithm == "qmix_ns":
        return QmixNsMixer(n_agents, embed_dim, rng)
    raise ValueError(f"unknown algorithm {algorithm!r}; expected one of {MIXER_NAMES}")


def mix_value(mixer: Optional[Mixer], chosen_values: np.ndarray,
              state: Optional[np.ndarray]) -> float:
    """Evaluate a mixer on one set of chosen per-agent values."""
    chosen = constant(np.asarray(chosen_values, dtype=np.float64)[None, :])
    if mixer is None:
        return float(chosen.data.sum())
    state_row = None if state is None else np.asarray(state, dtype=np.float64)[None, :]
    return float(mixer.forward(chosen, state_row).data[0])


def joint_greedy_value(q_values: np.ndarray, avail: np.ndarray,
                       state: Optional[np.ndarray],
                       mixer: Optional[Mixer]) -> Tuple[np.ndarray, float]:
    """Greedy joint action via per-agent argmax, and its mixed value.

    For every monotone head this equals the brute-force argmax of Q_tot
    over the joint action space.
    """
    actions = masked_argmax(q_values, avail)
    chosen = q_values[np.arange(q_values.shape[0]), actions]
    return actions, mix_value(mixer, chosen, state)
