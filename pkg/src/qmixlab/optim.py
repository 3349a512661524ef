"""RMSprop with per-parameter squared-gradient accumulators.

Update rule, per parameter p with gradient g:

    acc <- alpha * acc + (1 - alpha) * g^2
    p   <- p - lr * g / (sqrt(acc) + eps)

No momentum, no weight decay, no centering.
"""
from __future__ import annotations

from typing import Dict, Mapping

import numpy as np

from .autodiff import Tensor


class TrainingDivergenceError(RuntimeError):
    """Raised when a gradient or loss turns NaN/inf; the run should abort."""


class RmsProp:
    def __init__(self, params: Mapping[str, Tensor], lr: float = 5e-4,
                 alpha: float = 0.99, eps: float = 1e-5) -> None:
        if not 0.0 <= alpha < 1.0:
            raise ValueError(f"alpha must be in [0, 1), got {alpha}")
        self.params = dict(params)
        self.lr = lr
        self.alpha = alpha
        self.eps = eps
        # accumulators are keyed by parameter name so state stays stable
        self._acc: Dict[str, np.ndarray] = {
            name: np.zeros_like(p.data) for name, p in self.params.items()
        }

    def zero_grad(self) -> None:
        for p in self.params.values():
            p.grad = None

    def step(self) -> float:
        """Apply one update; returns the global gradient L2 norm."""
        sq_norm = 0.0
        for name, p in self.params.items():
            g = p.grad
            if g is None:
                continue
            if not np.all(np.isfinite(g)):
                raise TrainingDivergenceError(
                    f"non-finite gradient in parameter {name!r}; aborting the run"
                )
            sq_norm += float(np.dot(g.ravel(), g.ravel()))
            acc = self._acc[name]
            acc *= self.alpha
            acc += (1.0 - self.alpha) * g * g
            p.data -= self.lr * g / (np.sqrt(acc) + self.eps)
        return float(np.sqrt(sq_norm))

    def accumulator(self, name: str) -> np.ndarray:
        return self._acc[name]
