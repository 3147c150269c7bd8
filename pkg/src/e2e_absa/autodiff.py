"""Dense float64 tensors with reverse-mode automatic differentiation.

Every op builds a new :class:`Tensor` whose ``_backward`` closure maps the
output gradient to gradients for its parents. :func:`backward` replays the
ops reachable from a scalar loss in exact reverse execution order and
accumulates gradients into leaf tensors.

Broadcasting is limited to adding a bias vector over the rows of a matrix
and to python scalars.
"""

from __future__ import annotations

import itertools
import threading
from contextlib import contextmanager
from typing import Callable, Iterable, Sequence

import numpy as np
from scipy.special import erf, expit

_seq = itertools.count()
_state = threading.local()

_SQRT_HALF = np.sqrt(0.5)
_INV_SQRT_2PI = 1.0 / np.sqrt(2.0 * np.pi)


class ShapeError(ValueError):
    """Raised when operand shapes are incompatible."""


class ContractError(ValueError):
    """Raised when an op is called outside its documented preconditions."""


def _grad_enabled() -> bool:
    return getattr(_state, "enabled", True)


@contextmanager
def no_grad():
    """Disable graph recording in the current thread."""
    prev = _grad_enabled()
    _state.enabled = False
    try:
        yield
    finally:
        _state.enabled = prev


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward", "op", "seq")

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.array(data, dtype=np.float64)
        self.requires_grad = requires_grad
        self.grad = np.zeros_like(self.data) if requires_grad else None
        self._parents: tuple[Tensor, ...] = ()
        self._backward: Callable | None = None
        self.op = "leaf"
        self.seq = -1

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def is_leaf(self) -> bool:
        return self._backward is None

    def zero_grad(self) -> None:
        if self.requires_grad:
            self.grad = np.zeros_like(self.data)

    def item(self) -> float:
        return float(self.data)

    def numpy(self) -> np.ndarray:
        return self.data

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, op={self.op}, requires_grad={self.requires_grad})"

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return scale(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    @property
    def T(self):
        return transpose(self)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _node(data: np.ndarray, parents: Sequence[Tensor], backward: Callable, op: str) -> Tensor:
    out = Tensor.__new__(Tensor)
    out.data = data
    out.grad = None
    out.op = op
    if _grad_enabled() and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(parents)
        out._backward = backward
        out.seq = next(_seq)
    else:
        out.requires_grad = False
        out._parents = ()
        out._backward = None
        out.seq = -1
    return out


def custom_op(data: np.ndarray, parents: Sequence[Tensor], backward: Callable, op: str) -> Tensor:
    """Register a hand-written primitive.

    ``backward(g)`` must return one gradient array (or None) per parent.
    """
    return _node(np.asarray(data, dtype=np.float64), parents, backward, op)


class ComputationTape:
    """The ops reachable from an output, in execution order."""

    def __init__(self, nodes: list[Tensor]):
        self.nodes = nodes

    @classmethod
    def from_output(cls, out: Tensor) -> "ComputationTape":
        seen: set[int] = set()
        nodes: list[Tensor] = []
        stack = [out]
        while stack:
            t = stack.pop()
            if id(t) in seen or t.is_leaf:
                continue
            seen.add(id(t))
            nodes.append(t)
            stack.extend(t._parents)
        nodes.sort(key=lambda t: t.seq)
        return cls(nodes)

    def leaves(self) -> list[Tensor]:
        found: dict[int, Tensor] = {}
        for node in self.nodes:
            for p in node._parents:
                if p.is_leaf and p.requires_grad:
                    found.setdefault(id(p), p)
        return list(found.values())

    def __len__(self) -> int:
        return len(self.nodes)


def backward(loss: Tensor) -> ComputationTape:
    """Accumulate d(loss)/d(leaf) into every reachable leaf's ``grad``."""
    if loss.data.size != 1:
        raise ContractError(f"backward needs a scalar loss, got shape {loss.shape}")
    if not loss.requires_grad:
        raise ContractError("loss does not depend on any tensor requiring grad")
    if loss.is_leaf:
        loss.grad = loss.grad + np.ones_like(loss.data)
        return ComputationTape([])
    tape = ComputationTape.from_output(loss)
    grads: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
    for node in reversed(tape.nodes):
        g = grads.pop(id(node), None)
        if g is None:
            continue
        for parent, pg in zip(node._parents, node._backward(g)):
            if pg is None or not parent.requires_grad:
                continue
            if parent.is_leaf:
                parent.grad = parent.grad + pg
            elif id(parent) in grads:
                grads[id(parent)] = grads[id(parent)] + pg
            else:
                grads[id(parent)] = pg
    return tape


# ---------------------------------------------------------------- arithmetic


def _binary_operands(a, b):
    a, b = as_tensor(a), as_tensor(b)
    if a.shape == b.shape or a.data.ndim == 0 or b.data.ndim == 0:
        return a, b
    if b.data.ndim == 1 and a.data.ndim == 2 and a.shape[1] == b.shape[0]:
        return a, b
    if a.data.ndim == 1 and b.data.ndim == 2 and b.shape[1] == a.shape[0]:
        return a, b
    raise ShapeError(f"incompatible shapes {a.shape} and {b.shape}")


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    if g.shape == shape:
        return g
    if len(shape) == 0:
        return np.asarray(g.sum())
    return g.sum(axis=0)


def add(a, b) -> Tensor:
    a, b = _binary_operands(a, b)
    return _node(
        a.data + b.data,
        (a, b),
        lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)),
        "add",
    )


def sub(a, b) -> Tensor:
    a, b = _binary_operands(a, b)
    return _node(
        a.data - b.data,
        (a, b),
        lambda g: (_unbroadcast(g, a.shape), -_unbroadcast(g, b.shape)),
        "sub",
    )


def mul(a, b) -> Tensor:
    """Elementwise product."""
    a, b = _binary_operands(a, b)
    return _node(
        a.data * b.data,
        (a, b),
        lambda g: (_unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)),
        "mul",
    )


def scale(x: Tensor, c: float) -> Tensor:
    return _node(x.data * c, (x,), lambda g: (g * c,), "scale")


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.data.ndim != 2 or b.data.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul dimension mismatch: {a.shape} @ {b.shape}")
    return _node(
        a.data @ b.data,
        (a, b),
        lambda g: (g @ b.data.T, a.data.T @ g),
        "matmul",
    )


def transpose(x: Tensor) -> Tensor:
    if x.data.ndim != 2:
        raise ShapeError(f"transpose expects a matrix, got {x.shape}")
    return _node(x.data.T.copy(), (x,), lambda g: (g.T,), "transpose")


def sum(x: Tensor) -> Tensor:  # noqa: A001 - mirrors numpy naming
    return _node(np.asarray(x.data.sum()), (x,), lambda g: (np.full_like(x.data, g),), "sum")


def mean(x: Tensor) -> Tensor:
    n = x.data.size
    return _node(np.asarray(x.data.mean()), (x,), lambda g: (np.full_like(x.data, g / n),), "mean")


# ---------------------------------------------------------------- elementwise


def sigmoid(x: Tensor) -> Tensor:
    y = expit(x.data)
    return _node(y, (x,), lambda g: (g * y * (1.0 - y),), "sigmoid")


def tanh(x: Tensor) -> Tensor:
    y = np.tanh(x.data)
    return _node(y, (x,), lambda g: (g * (1.0 - y * y),), "tanh")


def relu(x: Tensor) -> Tensor:
    on = x.data > 0
    return _node(np.where(on, x.data, 0.0), (x,), lambda g: (g * on,), "relu")


def gelu(x: Tensor) -> Tensor:
    """Exact (erf-based) GELU."""
    cdf = 0.5 * (1.0 + erf(x.data * _SQRT_HALF))
    pdf = _INV_SQRT_2PI * np.exp(-0.5 * x.data * x.data)
    return _node(x.data * cdf, (x,), lambda g: (g * (cdf + x.data * pdf),), "gelu")


def exp(x: Tensor) -> Tensor:
    y = np.exp(x.data)
    return _node(y, (x,), lambda g: (g * y,), "exp")


def log(x: Tensor) -> Tensor:
    return _node(np.log(x.data), (x,), lambda g: (g / x.data,), "log")


def dropout(x: Tensor, rate: float, rng: np.random.Generator | None) -> Tensor:
    """Inverted dropout; identity when ``rate`` is 0 or ``rng`` is None."""
    if rate <= 0.0 or rng is None:
        return x
    keep = (rng.random(x.shape) >= rate) / (1.0 - rate)
    return _node(x.data * keep, (x,), lambda g: (g * keep,), "dropout")


# ---------------------------------------------------------------- row-wise


def softmax_rows(x: Tensor) -> Tensor:
    z = x.data - x.data.max(axis=-1, keepdims=True)
    e = np.exp(z)
    y = e / e.sum(axis=-1, keepdims=True)

    def _bw(g):
        return (y * (g - (g * y).sum(axis=-1, keepdims=True)),)

    return _node(y, (x,), _bw, "softmax")


def layer_norm(x: Tensor, gain: Tensor, bias: Tensor, eps: float = 1e-5) -> Tensor:
    """Normalise each last-axis slice with its population variance."""
    d = x.shape[-1]
    if gain.shape != (d,) or bias.shape != (d,):
        raise ShapeError(f"layer_norm params {gain.shape}/{bias.shape} do not match width {d}")
    mu = x.data.mean(axis=-1, keepdims=True)
    xc = x.data - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = xc * inv
    out = xhat * gain.data + bias.data

    def _bw(g):
        gh = g * gain.data
        gx = inv * (gh - gh.mean(axis=-1, keepdims=True) - xhat * (gh * xhat).mean(axis=-1, keepdims=True))
        axes = tuple(range(g.ndim - 1))
        return gx, (g * xhat).sum(axis=axes), g.sum(axis=axes)

    return _node(out, (x, gain, bias), _bw, "layer_norm")


# ---------------------------------------------------------------- indexing


def take_rows(x: Tensor, idx) -> Tensor:
    """Gather rows (embedding lookup); the backward pass scatter-adds."""
    idx = np.asarray(idx, dtype=np.intp)

    def _bw(g):
        gx = np.zeros_like(x.data)
        np.add.at(gx, idx, g)
        return (gx,)

    return _node(x.data[idx], (x,), _bw, "take_rows")


def pick(x: Tensor, rows, cols) -> Tensor:
    """Gather single entries ``x[rows[i], cols[i]]`` into a vector."""
    rows = np.asarray(rows, dtype=np.intp)
    cols = np.asarray(cols, dtype=np.intp)

    def _bw(g):
        gx = np.zeros_like(x.data)
        np.add.at(gx, (rows, cols), g)
        return (gx,)

    return _node(x.data[rows, cols], (x,), _bw, "pick")


def slice_cols(x: Tensor, start: int, stop: int) -> Tensor:
    def _bw(g):
        gx = np.zeros_like(x.data)
        gx[:, start:stop] = g
        return (gx,)

    return _node(x.data[:, start:stop].copy(), (x,), _bw, "slice_cols")


def concat_cols(xs: Sequence[Tensor]) -> Tensor:
    bounds = np.cumsum([0] + [t.shape[1] for t in xs])
    return _node(
        np.concatenate([t.data for t in xs], axis=1),
        tuple(xs),
        lambda g: tuple(g[:, bounds[i] : bounds[i + 1]] for i in range(len(xs))),
        "concat_cols",
    )


def concat_rows(xs: Sequence[Tensor]) -> Tensor:
    bounds = np.cumsum([0] + [t.shape[0] for t in xs])
    return _node(
        np.concatenate([t.data for t in xs], axis=0),
        tuple(xs),
        lambda g: tuple(g[bounds[i] : bounds[i + 1]] for i in range(len(xs))),
        "concat_rows",
    )


def zero_grads(params: Iterable[Tensor]) -> None:
    for p in params:
        p.zero_grad()
