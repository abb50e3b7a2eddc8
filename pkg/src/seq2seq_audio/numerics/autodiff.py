"""Minimal reverse-mode automatic differentiation over numpy arrays.

Every operation returns a new :class:`Tensor` that remembers its parents and a
closure mapping the output gradient to parent gradients. Nodes are numbered in
creation order, which is already a topological order of the graph, so the
backward sweep only has to collect the reachable nodes and visit them by
descending id.

Only the operations needed by the recurrent autoencoders are provided.
"""

from __future__ import annotations

import contextlib
import itertools
from typing import Callable, Iterable, Sequence

import numpy as np

_ids = itertools.count()
_grad_enabled = True


@contextlib.contextmanager
def no_grad():
    """Evaluate without recording the graph (inference only)."""
    global _grad_enabled
    prev, _grad_enabled = _grad_enabled, False
    try:
        yield
    finally:
        _grad_enabled = prev


class Tensor:
    """An array value with an optional gradient slot."""

    __slots__ = ("value", "grad", "requires_grad", "_parents", "_backward", "_id")

    def __init__(self, value, requires_grad: bool = False, parents=(), backward=None):
        self.value = np.asarray(value)
        self.grad = None
        self.requires_grad = requires_grad
        self._parents = parents
        self._backward = backward
        self._id = next(_ids)

    @property
    def shape(self) -> tuple[int, ...]:
        return self.value.shape

    @property
    def dtype(self):
        return self.value.dtype

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, dtype={self.dtype}, requires_grad={self.requires_grad})"

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
        return neg(self)

    def __getitem__(self, index):
        return index_op(self, index)

    def backward(self, grad=None) -> None:
        backward(self, grad)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _make(value, parents: Sequence[Tensor], backward: Callable) -> Tensor:
    if not _grad_enabled or not any(p.requires_grad for p in parents):
        return Tensor(value)
    return Tensor(value, requires_grad=True, parents=tuple(parents), backward=backward)


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad


def backward(root: Tensor, grad=None) -> None:
    """Accumulate d(root)/d(leaf) into ``.grad`` of every reachable leaf."""
    if grad is None:
        if root.value.size != 1:
            raise ValueError("backward() without a seed gradient needs a scalar root")
        grad = np.ones_like(root.value)
    nodes = {}
    stack = [root]
    while stack:
        node = stack.pop()
        if node._id in nodes or not node.requires_grad:
            continue
        nodes[node._id] = node
        stack.extend(node._parents)

    grads = {root._id: np.asarray(grad, dtype=root.value.dtype)}
    for nid in sorted(nodes, reverse=True):
        node = nodes[nid]
        g = grads.pop(nid, None)
        if g is None:
            continue
        if node._backward is None:
            node.grad = g if node.grad is None else node.grad + g
            continue
        for parent, pg in zip(node._parents, node._backward(g)):
            if pg is None or not parent.requires_grad:
                continue
            prev = grads.get(parent._id)
            grads[parent._id] = pg if prev is None else prev + pg


# ---------------------------------------------------------------------------
# elementwise


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    sa, sb = a.shape, b.shape
    return _make(a.value + b.value, (a, b),
                 lambda g: (_unbroadcast(g, sa), _unbroadcast(g, sb)))


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    sa, sb = a.shape, b.shape
    return _make(a.value - b.value, (a, b),
                 lambda g: (_unbroadcast(g, sa), _unbroadcast(-g, sb)))


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    av, bv = a.value, b.value
    return _make(av * bv, (a, b),
                 lambda g: (_unbroadcast(g * bv, av.shape), _unbroadcast(g * av, bv.shape)))


def neg(a) -> Tensor:
    a = as_tensor(a)
    return _make(-a.value, (a,), lambda g: (-g,))


def tanh(a) -> Tensor:
    a = as_tensor(a)
    out = np.tanh(a.value)
    return _make(out, (a,), lambda g: (g * (1 - out * out),))


def sigmoid(a) -> Tensor:
    a = as_tensor(a)
    x = a.value
    # split by sign so exp never overflows
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1 / (1 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1 + ex)
    return _make(out, (a,), lambda g: (g * out * (1 - out),))


def identity(a) -> Tensor:
    return as_tensor(a)


def square(a) -> Tensor:
    a = as_tensor(a)
    x = a.value
    return _make(x * x, (a,), lambda g: (2 * g * x,))


def where(mask: np.ndarray, a, b) -> Tensor:
    """Select ``a`` where ``mask`` is true and ``b`` elsewhere, exactly."""
    a, b = as_tensor(a), as_tensor(b)
    mask = np.asarray(mask, dtype=bool)
    sa, sb = a.shape, b.shape
    zero = np.zeros((), dtype=np.result_type(a.value, b.value))
    return _make(np.where(mask, a.value, b.value), (a, b),
                 lambda g: (_unbroadcast(np.where(mask, g, zero), sa),
                            _unbroadcast(np.where(mask, zero, g), sb)))


# ---------------------------------------------------------------------------
# linear algebra


def linear(x, W) -> Tensor:
    """``x @ W.T`` for ``x`` of shape (..., in) and ``W`` of shape (out, in)."""
    x, W = as_tensor(x), as_tensor(W)
    xv, Wv = x.value, W.value

    def bw(g):
        gx = g @ Wv if x.requires_grad else None
        gW = None
        if W.requires_grad:
            gW = g.reshape(-1, g.shape[-1]).T @ xv.reshape(-1, xv.shape[-1])
        return gx, gW

    return _make(xv @ Wv.T, (x, W), bw)


def weighted_sum(alpha, H) -> Tensor:
    """Batched convex combination: (B, ..., T) weights times (B, T, D) states."""
    alpha, H = as_tensor(alpha), as_tensor(H)
    av, Hv = alpha.value, H.value
    squeeze = av.ndim == 2
    a3 = av[:, None, :] if squeeze else av
    out = np.matmul(a3, Hv)

    def bw(g):
        g3 = g[:, None, :] if squeeze else g
        ga = np.matmul(g3, Hv.transpose(0, 2, 1))
        if squeeze:
            ga = ga[:, 0, :]
        gH = np.matmul(a3.transpose(0, 2, 1), g3)
        return ga, gH

    return _make(out[:, 0, :] if squeeze else out, (alpha, H), bw)


# ---------------------------------------------------------------------------
# reductions and normalisation


def sum(a, axis=None) -> Tensor:  # noqa: A001
    a = as_tensor(a)
    shape = a.shape

    def bw(g):
        if axis is not None:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, shape).copy(),)

    return _make(a.value.sum(axis=axis), (a,), bw)


def mean(a, axis=None) -> Tensor:
    a = as_tensor(a)
    n = a.value.size if axis is None else a.shape[axis]
    return mul(sum(a, axis), np.asarray(1.0 / n, dtype=a.dtype))


def softmax(a, mask: np.ndarray | None = None) -> Tensor:
    """Softmax over the last axis; entries with ``mask == False`` get weight 0."""
    a = as_tensor(a)
    x = a.value
    if mask is not None:
        x = np.where(mask, x, -np.inf)
    shifted = x - x.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    out = e / e.sum(axis=-1, keepdims=True)

    def bw(g):
        return (out * (g - (g * out).sum(axis=-1, keepdims=True)),)

    return _make(out, (a,), bw)


# ---------------------------------------------------------------------------
# shape manipulation


def concat(tensors: Iterable, axis: int = -1) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    sizes = [t.shape[axis] for t in tensors]
    bounds = np.cumsum([0] + sizes)

    def bw(g):
        return tuple(np.take(g, np.arange(lo, hi), axis=axis)
                     for lo, hi in zip(bounds[:-1], bounds[1:]))

    return _make(np.concatenate([t.value for t in tensors], axis=axis), tensors, bw)


def stack(tensors: Iterable, axis: int = 0) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]

    def bw(g):
        return tuple(np.take(g, i, axis=axis) for i in range(len(tensors)))

    return _make(np.stack([t.value for t in tensors], axis=axis), tensors, bw)


def index_op(a, index) -> Tensor:
    a = as_tensor(a)
    shape, dtype = a.shape, a.dtype

    basic = _is_basic(index)

    def bw(g):
        full = np.zeros(shape, dtype=dtype)
        if basic:
            full[index] = g
        else:
            np.add.at(full, index, g)
        return (full,)

    return _make(a.value[index], (a,), bw)


def _is_basic(index) -> bool:
    items = index if isinstance(index, tuple) else (index,)
    return all(isinstance(i, (int, np.integer, slice)) or i is None or i is Ellipsis for i in items)


def split(a, sizes: Sequence[int], axis: int = -1) -> list[Tensor]:
    bounds = np.cumsum([0] + list(sizes))
    if bounds[-1] != as_tensor(a).shape[axis]:
        raise ValueError(f"split sizes {list(sizes)} do not cover axis of size {as_tensor(a).shape[axis]}")
    index = [slice(None)] * as_tensor(a).value.ndim
    parts = []
    for lo, hi in zip(bounds[:-1], bounds[1:]):
        index[axis] = slice(int(lo), int(hi))
        parts.append(index_op(a, tuple(index)))
    return parts


def broadcast_to(a, shape) -> Tensor:
    a = as_tensor(a)
    src = a.shape
    return _make(np.broadcast_to(a.value, shape), (a,), lambda g: (_unbroadcast(g, src),))
