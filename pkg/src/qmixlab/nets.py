"""Parameter containers for the network layers used across the package.

Initialisation convention: every weight matrix (linear and GRU alike)
draws uniformly from +-1/sqrt(fan_in); biases start at zero.
"""
from __future__ import annotations

from typing import Dict

import numpy as np

from .autodiff import Tensor, gru_cell, linear, parameter


def uniform_fan_in(rng: np.random.Generator, shape: tuple, fan_in: int) -> np.ndarray:
    bound = 1.0 / np.sqrt(float(fan_in))
    return rng.uniform(-bound, bound, size=shape)


def one_hot(indices: np.ndarray, depth: int) -> np.ndarray:
    """Float64 one-hot encoding over the trailing axis."""
    indices = np.asarray(indices)
    out = np.zeros(indices.shape + (depth,), dtype=np.float64)
    np.put_along_axis(out, indices[..., None].astype(np.int64), 1.0, axis=-1)
    return out


class Linear:
    """A dense layer holding its weight (out, in) and bias (out,) tensors."""

    def __init__(self, weight: Tensor, bias: Tensor) -> None:
        self.weight = weight
        self.bias = bias

    @classmethod
    def create(cls, rng: np.random.Generator, in_dim: int, out_dim: int) -> "Linear":
        return cls(
            parameter(uniform_fan_in(rng, (out_dim, in_dim), in_dim)),
            parameter(np.zeros(out_dim)),
        )

    def __call__(self, x) -> Tensor:
        return linear(x, self.weight, self.bias)

    def params(self, prefix: str) -> Dict[str, Tensor]:
        return {f"{prefix}.weight": self.weight, f"{prefix}.bias": self.bias}

    @property
    def out_dim(self) -> int:
        return self.weight.data.shape[0]


class GruLayer:
    """GRU cell parameters packed in z/r/c gate order.

    ``w_in`` (3H, I) and ``b_in`` (3H,) feed the input path of all three
    gates; ``u_zr`` (2H, H) holds the recurrent weights of the update and
    reset gates and ``u_c`` (H, H) those of the candidate.
    """

    def __init__(self, w_in: Tensor, b_in: Tensor, u_zr: Tensor, u_c: Tensor) -> None:
        self.w_in = w_in
        self.b_in = b_in
        self.u_zr = u_zr
        self.u_c = u_c

    @classmethod
    def create(cls, rng: np.random.Generator, in_dim: int, hidden_dim: int) -> "GruLayer":
        return cls(
            parameter(uniform_fan_in(rng, (3 * hidden_dim, in_dim), in_dim)),
            parameter(np.zeros(3 * hidden_dim)),
            parameter(uniform_fan_in(rng, (2 * hidden_dim, hidden_dim), hidden_dim)),
            parameter(uniform_fan_in(rng, (hidden_dim, hidden_dim), hidden_dim)),
        )

    def __call__(self, x, h) -> Tensor:
        return gru_cell(x, h, self.w_in, self.b_in, self.u_zr, self.u_c)

    def params(self, prefix: str) -> Dict[str, Tensor]:
        return {
            f"{prefix}.w_in": self.w_in,
            f"{prefix}.b_in": self.b_in,
            f"{prefix}.u_zr": self.u_zr,
            f"{prefix}.u_c": self.u_c,
        }

    @property
    def hidden_dim(self) -> int:
        return self.u_c.data.shape[0]


def copy_params(dst: Dict[str, Tensor], src: Dict[str, Tensor]) -> None:
    """Hard-copy parameter values (used for target-network syncs)."""
    if dst.keys() != src.keys():
        raise ValueError(f"parameter sets differ: {sorted(dst)} vs {sorted(src)}")
    for name, p in dst.items():
        np.copyto(p.data, src[name].data)
