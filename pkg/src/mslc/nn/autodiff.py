"""Tape-based reverse-mode differentiation over numpy arrays.

Only the handful of operations the entropy models need are provided. Every
op records a closure that pushes the output gradient to its inputs;
``backward`` replays them in reverse topological order.
"""

from __future__ import annotations

import contextlib
from typing import Callable, Iterable, Optional, Sequence

import numpy as np

_grad_enabled = True


@contextlib.contextmanager
def no_grad():
    global _grad_enabled
    prev = _grad_enabled
    _grad_enabled = False
    try:
        yield
    finally:
        _grad_enabled = prev


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "name", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False, name: Optional[str] = None):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad: Optional[np.ndarray] = None
        self.requires_grad = requires_grad
        self.name = name
        self._parents: tuple = ()
        self._backward: Optional[Callable[[np.ndarray], None]] = None

    @property
    def shape(self):
        return self.data.shape

    def __len__(self):
        return len(self.data)

    def __repr__(self):
        tag = f" {self.name!r}" if self.name else ""
        return f"Tensor{tag}(shape={self.data.shape})"

    def _accum(self, g: np.ndarray) -> None:
        if self.grad is None:
            self.grad = np.array(g, dtype=np.float64, copy=True)
        else:
            self.grad += g

    def zero_grad(self) -> None:
        self.grad = None

    # sugar
    def __add__(self, other):
        return add(self, other)

    def __mul__(self, other):
        return mul(self, other)

    def __matmul__(self, other):
        return matmul(self, other)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _make(data, parents: Sequence[Tensor], backward) -> Tensor:
    out = Tensor(data)
    if _grad_enabled and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(parents)
        out._backward = backward
    return out


def _unbroadcast(g: np.ndarray, shape) -> np.ndarray:
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for i, s in enumerate(shape):
        if s == 1 and g.shape[i] != 1:
            g = g.sum(axis=i, keepdims=True)
    return g


def matmul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)

    def back(g):
        if a.requires_grad:
            a._accum(g @ np.swapaxes(b.data, -1, -2))
        if b.requires_grad:
            a2 = a.data.reshape(-1, a.data.shape[-1])
            b._accum(a2.T @ g.reshape(-1, g.shape[-1]))

    return _make(a.data @ b.data, (a, b), back)


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)

    def back(g):
        if a.requires_grad:
            a._accum(_unbroadcast(g, a.data.shape))
        if b.requires_grad:
            b._accum(_unbroadcast(g, b.data.shape))

    return _make(a.data + b.data, (a, b), back)


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)

    def back(g):
        if a.requires_grad:
            a._accum(_unbroadcast(g * b.data, a.data.shape))
        if b.requires_grad:
            b._accum(_unbroadcast(g * a.data, b.data.shape))

    return _make(a.data * b.data, (a, b), back)


def relu(a) -> Tensor:
    a = as_tensor(a)
    mask = a.data > 0

    def back(g):
        a._accum(g * mask)

    return _make(np.where(mask, a.data, 0.0), (a,), back)


def concat(tensors: Sequence, axis: int = -1) -> Tensor:
    ts = [as_tensor(t) for t in tensors]
    sizes = [t.data.shape[axis] for t in ts]
    cuts = np.cumsum(sizes)[:-1]

    def back(g):
        for t, part in zip(ts, np.split(g, cuts, axis=axis)):
            if t.requires_grad:
                t._accum(part)

    return _make(np.concatenate([t.data for t in ts], axis=axis), ts, back)


def scatter_rows(n: int, idx: np.ndarray, g: np.ndarray) -> np.ndarray:
    """``out[idx[j]] += g[j]`` into an (n, ...) zero array."""
    idx = np.asarray(idx, dtype=np.int64)
    tail = g.shape[1:]
    if len(idx) == 0:
        return np.zeros((n,) + tail)
    order = np.argsort(idx, kind="stable")
    sidx = idx[order]
    starts = np.flatnonzero(np.r_[True, sidx[1:] != sidx[:-1]])
    out = np.zeros((n,) + tail)
    out[sidx[starts]] = np.add.reduceat(g[order], starts, axis=0)
    return out


def take_rows(a, idx) -> Tensor:
    """Gather rows ``a[idx]``; negative indices produce zero rows."""
    a = as_tensor(a)
    idx = np.asarray(idx, dtype=np.int64)
    valid = idx >= 0
    if len(a.data) == 0:
        if valid.any():
            raise IndexError("take_rows from an empty tensor")
        return Tensor(np.zeros(idx.shape + a.data.shape[1:]))
    safe = np.where(valid, idx, 0)
    out = a.data[safe]
    if not valid.all():
        out = out * valid.reshape(valid.shape + (1,) * (a.data.ndim - 1))

    def back(g):
        v = valid.ravel()
        gg = g.reshape((-1,) + a.data.shape[1:])
        a._accum(scatter_rows(len(a.data), safe.ravel()[v], gg[v]))

    return _make(out, (a,), back)


def segment_sum(a, segment_ids, num_segments: int) -> Tensor:
    """Sum rows of ``a`` into ``num_segments`` buckets."""
    a = as_tensor(a)
    seg = np.asarray(segment_ids, dtype=np.int64)
    out = scatter_rows(num_segments, seg, a.data)

    def back(g):
        a._accum(g[seg])

    return _make(out, (a,), back)


def sum_axis(a, axis: int) -> Tensor:
    a = as_tensor(a)

    def back(g):
        a._accum(np.broadcast_to(np.expand_dims(g, axis), a.data.shape))

    return _make(a.data.sum(axis=axis), (a,), back)


def reshape(a, shape) -> Tensor:
    a = as_tensor(a)

    def back(g):
        a._accum(g.reshape(a.data.shape))

    return _make(a.data.reshape(shape), (a,), back)


def log_softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=-1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=-1, keepdims=True))


def softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def softmax_cross_entropy(logits, targets, weights=None) -> tuple[Tensor, np.ndarray]:
    """Mean negative log-likelihood in nats, plus the softmax rows.

    ``weights`` optionally rescales each row's contribution; the result is
    then ``sum(w * nll) / len(targets)``.
    """
    logits = as_tensor(logits)
    t = np.asarray(targets, dtype=np.int64)
    n = len(t)
    lp = log_softmax(logits.data)
    prob = np.exp(lp)
    w = np.ones(n) if weights is None else np.asarray(weights, dtype=np.float64)
    nll = -lp[np.arange(n), t]
    loss = float((w * nll).sum() / max(n, 1))

    def back(g):
        d = prob.copy()
        d[np.arange(n), t] -= 1.0
        logits._accum(d * (w / max(n, 1) * g)[:, None])

    return _make(np.asarray(loss), (logits,), back), prob


def backward(loss: Tensor) -> None:
    """Accumulate d(loss)/d(param) into ``.grad`` of every reachable leaf."""
    order: list[Tensor] = []
    seen = set()
    stack = [(loss, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if p.requires_grad and id(p) not in seen:
                stack.append((p, False))
    loss.grad = np.ones_like(loss.data)
    for node in reversed(order):
        if node._backward is not None and node.grad is not None:
            node._backward(node.grad)
            if node._parents:
                node.grad = None  # free intermediate buffers
