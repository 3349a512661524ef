"""Dense float64 tensors with tape-based reverse-mode differentiation.

The engine is deliberately small: a :class:`Tensor` wraps a numpy float64
array, and every differentiable operation appends one node to the innermost
active :class:`Tape`. Backward walks the tape exactly once in reverse order,
accumulating gradients into ``Tensor.grad`` buffers that are allocated
lazily. Running ops without an active tape records nothing, which is the
fast path used for rollouts and target-network evaluation.

Supported broadcasting is intentionally narrow: matrix + row-vector bias,
and multiplication by a python scalar. Anything else must match shapes
exactly and raises :class:`ShapeError` naming both operands.
"""
from __future__ import annotations

from typing import Callable, Iterable, Mapping, Optional, Sequence, Union

import numpy as np

__all__ = [
    "Tensor",
    "Tape",
    "ShapeError",
    "GraphError",
    "constant",
    "parameter",
    "add",
    "sub",
    "mul",
    "matmul",
    "linear",
    "bvm",
    "tsum",
    "reshape",
    "concat_rows",
    "slice_rows",
    "activation",
    "relu",
    "elu",
    "abs_",
    "sigmoid",
    "tanh",
    "gru_cell",
    "backward",
]

ArrayLike = Union[np.ndarray, float, int, Sequence]

ACTIVATIONS = ("relu", "elu", "abs", "sigmoid", "tanh")


class ShapeError(ValueError):
    """Operand shapes are incompatible for the requested op."""


class GraphError(RuntimeError):
    """The tape was misused (non-scalar loss, no recording tape, ...)."""


_TAPES: list["Tape"] = []


class Tape:
    """Append-only record of one forward pass.

    Use as a context manager; ops executed inside record themselves here.
    Re-entering the same tape is allowed so that two tapes can be
    interleaved without sharing nodes.
    """

    def __init__(self) -> None:
        self._nodes: list[tuple[Tensor, Callable[[np.ndarray], None]]] = []

    def __len__(self) -> int:
        return len(self._nodes)

    def __enter__(self) -> "Tape":
        _TAPES.append(self)
        return self

    def __exit__(self, *exc) -> None:
        popped = _TAPES.pop()
        if popped is not self:  # pragma: no cover - misuse guard
            raise GraphError("tape context exited out of order")

    def backward(self, loss: "Tensor", params: Optional[Mapping[str, "Tensor"]] = None):
        """Propagate d(loss)/d(x) to every tensor recorded on this tape.

        ``loss`` must be scalar. When ``params`` is given, returns a
        name -> gradient map in which parameters the loss never touched
        get zero gradients.
        """
        if loss.data.size != 1:
            raise GraphError(f"backward needs a scalar loss, got shape {loss.data.shape}")
        if loss._tape is not self:
            raise GraphError("loss was not recorded on this tape")
        loss.grad = np.ones_like(loss.data)
        for out, fn in reversed(self._nodes):
            if out.grad is not None:
                fn(out.grad)
        if params is None:
            return None
        grads = {}
        for name, p in params.items():
            if p.grad is None:
                p.grad = np.zeros_like(p.data)
            grads[name] = p.grad
        return grads


def _active_tape() -> Optional[Tape]:
    return _TAPES[-1] if _TAPES else None


class Tensor:
    """A dense float64 array plus optional gradient and tape bookkeeping.

    ``node_id`` is the tensor's position on the tape that produced it
    (-1 for leaves), so a tape can be replayed in reverse deterministically.
    """

    __slots__ = ("data", "grad", "requires_grad", "node_id", "_tape")

    def __init__(self, data: ArrayLike, requires_grad: bool = False) -> None:
        self.data = np.asarray(data, dtype=np.float64)
        self.grad: Optional[np.ndarray] = None
        self.requires_grad = requires_grad
        self.node_id = -1
        self._tape: Optional[Tape] = None

    @property
    def shape(self) -> tuple:
        return self.data.shape

    def item(self) -> float:
        return float(self.data.reshape(()))

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self) -> str:
        flag = ", grad" if self.requires_grad else ""
        return f"Tensor(shape={self.data.shape}{flag})"

    # operator sugar
    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return sub(self, other)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(self, other)

    def __matmul__(self, other):
        return matmul(self, other)

    def __neg__(self):
        return mul(self, -1.0)

    def sum(self, axis=None):
        return tsum(self, axis=axis)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)


def constant(data: ArrayLike) -> Tensor:
    return Tensor(data, requires_grad=False)


def parameter(data: ArrayLike) -> Tensor:
    return Tensor(data, requires_grad=True)


def _coerce(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _grad_buf(t: Tensor) -> np.ndarray:
    if t.grad is None:
        t.grad = np.zeros_like(t.data)
    return t.grad


def _accum(t: Tensor, g: np.ndarray) -> None:
    if t.requires_grad:
        _grad_buf(t)
        t.grad += g


def _record(out: Tensor, fn: Callable[[np.ndarray], None]) -> None:
    tape = _active_tape()
    if tape is None:
        return
    out.requires_grad = True
    out.node_id = len(tape._nodes)
    out._tape = tape
    tape._nodes.append((out, fn))


def _any_grad(*tensors: Tensor) -> bool:
    return _active_tape() is not None and any(t.requires_grad for t in tensors)


# ---------------------------------------------------------------------------
# arithmetic
# ---------------------------------------------------------------------------

def add(a: Tensor, b) -> Tensor:
    """Elementwise sum; also accepts a 1-D bias against a 2-D left operand."""
    a = _coerce(a)
    if isinstance(b, (int, float)):
        out = Tensor(a.data + float(b))
        if _any_grad(a):
            _record(out, lambda g: _accum(a, g))
        return out
    b = _coerce(b)
    bias = a.data.ndim == 2 and b.data.ndim == 1 and a.data.shape[1] == b.data.shape[0]
    if not bias and a.data.shape != b.data.shape:
        raise ShapeError(f"add: incompatible shapes {a.data.shape} and {b.data.shape}")
    out = Tensor(a.data + b.data)
    if _any_grad(a, b):
        if bias:
            def back(g, a=a, b=b):
                _accum(a, g)
                _accum(b, g.sum(axis=0))
        else:
            def back(g, a=a, b=b):
                _accum(a, g)
                _accum(b, g)
        _record(out, back)
    return out


def sub(a: Tensor, b) -> Tensor:
    a = _coerce(a)
    if isinstance(b, (int, float)):
        return add(a, -float(b))
    b = _coerce(b)
    if a.data.shape != b.data.shape:
        raise ShapeError(f"sub: incompatible shapes {a.data.shape} and {b.data.shape}")
    out = Tensor(a.data - b.data)
    if _any_grad(a, b):
        def back(g, a=a, b=b):
            _accum(a, g)
            _accum(b, -g)
        _record(out, back)
    return out


def mul(a: Tensor, b) -> Tensor:
    """Elementwise product with a same-shape tensor or a python scalar."""
    a = _coerce(a)
    if isinstance(b, (int, float)):
        s = float(b)
        out = Tensor(a.data * s)
        if _any_grad(a):
            _record(out, lambda g: _accum(a, g * s))
        return out
    b = _coerce(b)
    if a.data.shape != b.data.shape:
        raise ShapeError(f"mul: incompatible shapes {a.data.shape} and {b.data.shape}")
    out = Tensor(a.data * b.data)
    if _any_grad(a, b):
        def back(g, a=a, b=b):
            _accum(a, g * b.data)
            _accum(b, g * a.data)
        _record(out, back)
    return out


def matmul(a: Tensor, b: Tensor) -> Tensor:
    a, b = _coerce(a), _coerce(b)
    if a.data.ndim != 2 or b.data.ndim != 2 or a.data.shape[1] != b.data.shape[0]:
        raise ShapeError(f"matmul: incompatible shapes {a.data.shape} and {b.data.shape}")
    out = Tensor(a.data @ b.data)
    if _any_grad(a, b):
        def back(g, a=a, b=b):
            _accum(a, g @ b.data.T)
            _accum(b, a.data.T @ g)
        _record(out, back)
    return out


def linear(x: Tensor, weight: Tensor, bias: Tensor) -> Tensor:
    """Affine map ``x @ weight.T + bias`` with ``weight`` of shape (out, in).

    Accepts a single input vector or a matrix of row vectors.
    """
    x, weight, bias = _coerce(x), _coerce(weight), _coerce(bias)
    vec = x.data.ndim == 1
    xd = x.data[None, :] if vec else x.data
    if xd.ndim != 2 or weight.data.ndim != 2 or xd.shape[1] != weight.data.shape[1]:
        raise ShapeError(
            f"linear: input shape {x.data.shape} does not match weight shape {weight.data.shape}"
        )
    if bias.data.shape != (weight.data.shape[0],):
        raise ShapeError(
            f"linear: bias shape {bias.data.shape} does not match weight shape {weight.data.shape}"
        )
    y = xd @ weight.data.T + bias.data
    out = Tensor(y[0] if vec else y)
    if _any_grad(x, weight, bias):
        def back(g, x=x, weight=weight, bias=bias, vec=vec, xd=xd):
            gd = g[None, :] if vec else g
            _accum(x, (gd @ weight.data)[0] if vec else gd @ weight.data)
            _accum(weight, gd.T @ xd)
            _accum(bias, gd.sum(axis=0))
        _record(out, back)
    return out


def bvm(q: Tensor, w: Tensor) -> Tensor:
    """Batched vector-matrix product: (B, n) x (B, n, H) -> (B, H)."""
    q, w = _coerce(q), _coerce(w)
    if q.data.ndim != 2 or w.data.ndim != 3 or q.data.shape != w.data.shape[:2]:
        raise ShapeError(f"bvm: incompatible shapes {q.data.shape} and {w.data.shape}")
    out = Tensor(np.matmul(q.data[:, None, :], w.data)[:, 0, :])
    if _any_grad(q, w):
        def back(g, q=q, w=w):
            _accum(q, np.matmul(g[:, None, :], w.data.transpose(0, 2, 1))[:, 0, :])
            _accum(w, q.data[:, :, None] * g[:, None, :])
        _record(out, back)
    return out


def tsum(x: Tensor, axis: Optional[int] = None) -> Tensor:
    x = _coerce(x)
    out = Tensor(x.data.sum(axis=axis))
    if _any_grad(x):
        shape = x.data.shape

        def back(g, x=x, axis=axis, shape=shape):
            if axis is None:
                _accum(x, np.broadcast_to(g, shape))
            else:
                _accum(x, np.expand_dims(g, axis))
        _record(out, back)
    return out


def reshape(x: Tensor, shape: tuple) -> Tensor:
    x = _coerce(x)
    out = Tensor(x.data.reshape(shape))
    if _any_grad(x):
        orig = x.data.shape
        _record(out, lambda g, x=x, orig=orig: _accum(x, g.reshape(orig)))
    return out


def concat_rows(parts: Iterable[Tensor]) -> Tensor:
    """Stack 2-D tensors along rows; backward splits the gradient back."""
    parts = [_coerce(p) for p in parts]
    out = Tensor(np.concatenate([p.data for p in parts], axis=0))
    if _any_grad(*parts):
        offsets = np.cumsum([0] + [p.data.shape[0] for p in parts])

        def back(g, parts=parts, offsets=offsets):
            for p, s, e in zip(parts, offsets[:-1], offsets[1:]):
                _accum(p, g[s:e])
        _record(out, back)
    return out


def slice_rows(x: Tensor, start: int, stop: int) -> Tensor:
    x = _coerce(x)
    out = Tensor(x.data[start:stop])
    if _any_grad(x):
        def back(g, x=x, start=start, stop=stop):
            if x.requires_grad:
                _grad_buf(x)[start:stop] += g
        _record(out, back)
    return out


# ---------------------------------------------------------------------------
# activations
# ---------------------------------------------------------------------------

def _sigmoid(x: np.ndarray) -> np.ndarray:
    # 0.5*(1+tanh(x/2)) is exact and avoids exp overflow
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def activation(x: Tensor, kind: str) -> Tensor:
    """Elementwise nonlinearity. ``kind`` is one of relu/elu/abs/sigmoid/tanh.

    The elu negative branch is exp(x) - 1 (scale 1); the abs gradient at
    exactly zero is defined as zero.
    """
    x = _coerce(x)
    if kind == "relu":
        out = Tensor(np.maximum(x.data, 0.0))
        if _any_grad(x):
            mask = x.data > 0
            _record(out, lambda g, x=x, mask=mask: _accum(x, g * mask))
        return out
    if kind == "elu":
        y = np.where(x.data > 0, x.data, np.expm1(x.data))
        out = Tensor(y)
        if _any_grad(x):
            local = np.where(x.data > 0, 1.0, y + 1.0)
            _record(out, lambda g, x=x, local=local: _accum(x, g * local))
        return out
    if kind == "abs":
        out = Tensor(np.abs(x.data))
        if _any_grad(x):
            local = np.sign(x.data)
            _record(out, lambda g, x=x, local=local: _accum(x, g * local))
        return out
    if kind == "sigmoid":
        y = _sigmoid(x.data)
        out = Tensor(y)
        if _any_grad(x):
            _record(out, lambda g, x=x, y=y: _accum(x, g * y * (1.0 - y)))
        return out
    if kind == "tanh":
        y = np.tanh(x.data)
        out = Tensor(y)
        if _any_grad(x):
            _record(out, lambda g, x=x, y=y: _accum(x, g * (1.0 - y * y)))
        return out
    raise ValueError(f"unknown activation kind: {kind!r} (expected one of {ACTIVATIONS})")


def relu(x: Tensor) -> Tensor:
    return activation(x, "relu")


def elu(x: Tensor) -> Tensor:
    return activation(x, "elu")


def abs_(x: Tensor) -> Tensor:
    return activation(x, "abs")


def sigmoid(x: Tensor) -> Tensor:
    return activation(x, "sigmoid")


def tanh(x: Tensor) -> Tensor:
    return activation(x, "tanh")


# ---------------------------------------------------------------------------
# fused GRU cell
# ---------------------------------------------------------------------------

def gru_cell(x: Tensor, h: Tensor, w_in: Tensor, b_in: Tensor,
             u_zr: Tensor, u_c: Tensor) -> Tensor:
    """One GRU step, fused into a single tape node.

    Gate equations (update z, reset r, candidate c, packed in z/r/c order):

        z = sigmoid(x Wz^T + h Uz^T + bz)
        r = sigmoid(x Wr^T + h Ur^T + br)
        c = tanh(x Wc^T + (r * h) Uc^T + bc)
        h' = (1 - z) * h + z * c

    Parameter shapes, for hidden width H and input width I:
    ``w_in`` (3H, I), ``b_in`` (3H,), ``u_zr`` (2H, H), ``u_c`` (H, H).
    """
    x, h = _coerce(x), _coerce(h)
    w_in, b_in, u_zr, u_c = map(_coerce, (w_in, b_in, u_zr, u_c))
    if x.data.ndim != 2 or h.data.ndim != 2 or x.data.shape[0] != h.data.shape[0]:
        raise ShapeError(f"gru_cell: input shape {x.data.shape} does not pair with hidden shape {h.data.shape}")
    hd = h.data.shape[1]
    if w_in.data.shape != (3 * hd, x.data.shape[1]):
        raise ShapeError(f"gru_cell: w_in shape {w_in.data.shape} does not match input shape {x.data.shape}")
    if b_in.data.shape != (3 * hd,) or u_zr.data.shape != (2 * hd, hd) or u_c.data.shape != (hd, hd):
        raise ShapeError(
            f"gru_cell: parameter shapes {b_in.data.shape}/{u_zr.data.shape}/{u_c.data.shape} "
            f"do not match hidden shape {h.data.shape}"
        )

    gx = x.data @ w_in.data.T + b_in.data                      # (R, 3H)
    gh = h.data @ u_zr.data.T                                  # (R, 2H)
    z = _sigmoid(gx[:, :hd] + gh[:, :hd])
    r = _sigmoid(gx[:, hd:2 * hd] + gh[:, hd:])
    rh = r * h.data
    c = np.tanh(gx[:, 2 * hd:] + rh @ u_c.data.T)
    out = Tensor((1.0 - z) * h.data + z * c)

    if _any_grad(x, h, w_in, b_in, u_zr, u_c):
        def back(g, x=x, h=h, w_in=w_in, b_in=b_in, u_zr=u_zr, u_c=u_c,
                 z=z, r=r, c=c, rh=rh, hd=hd):
            dz = g * (c - h.data)
            dc = g * z
            dh = g * (1.0 - z)
            da_c = dc * (1.0 - c * c)
            d_rh = da_c @ u_c.data
            _accum(u_c, da_c.T @ rh)
            dr = d_rh * h.data
            dh += d_rh * r
            da_r = dr * r * (1.0 - r)
            da_z = dz * z * (1.0 - z)
            dh += da_z @ u_zr.data[:hd] + da_r @ u_zr.data[hd:]
            _accum(h, dh)
            if u_zr.requires_grad:
                _grad_buf(u_zr)[:hd] += da_z.T @ h.data
                _grad_buf(u_zr)[hd:] += da_r.T @ h.data
            da_x = np.concatenate([da_z, da_r, da_c], axis=1)
            _accum(x, da_x @ w_in.data)
            _accum(w_in, da_x.T @ x.data)
            _accum(b_in, da_x.sum(axis=0))
        _record(out, back)
    return out


# ---------------------------------------------------------------------------
# backward entry point
# ---------------------------------------------------------------------------

def backward(loss: Tensor, params: Optional[Mapping[str, Tensor]] = None):
    """Run reverse-mode differentiation from a scalar loss.

    Dispatches to the tape that recorded ``loss``. Parameters the loss does
    not reach come back with zero gradients when ``params`` is supplied.
    """
    if loss._tape is None:
        raise GraphError("loss is not attached to a tape; run the forward pass inside `with Tape():`")
    return loss._tape.backward(loss, params)
