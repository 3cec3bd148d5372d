"""Minimal float64 tensors with tape-based reverse-mode differentiation.

Only the handful of operations the predictors need are provided. Every op
records its parents and a closure that maps the output gradient to parent
gradients; :meth:`Tensor.backward` replays them in reverse topological order.
"""

from __future__ import annotations

import contextlib

import numpy as np

_grad_enabled = True


@contextlib.contextmanager
def no_grad():
    global _grad_enabled
    prev, _grad_enabled = _grad_enabled, False
    try:
        yield
    finally:
        _grad_enabled = prev


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad = None
        self.requires_grad = requires_grad
        self._parents = ()
        self._backward = None

    @property
    def shape(self):
        return self.data.shape

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"

    def numpy(self) -> np.ndarray:
        return self.data

    def zero_grad(self):
        self.grad = None

    def backward(self, grad=None):
        if grad is None:
            if self.data.size != 1:
                raise ValueError("backward() without a gradient needs a scalar output")
            grad = np.ones_like(self.data)
        order, seen = [], set()

        def visit(t):
            stack = [(t, False)]
            while stack:
                node, done = stack.pop()
                if done:
                    order.append(node)
                    continue
                if id(node) in seen:
                    continue
                seen.add(id(node))
                stack.append((node, True))
                for p in node._parents:
                    if id(p) not in seen:
                        stack.append((p, False))

        visit(self)
        grads = {id(self): grad}
        for node in reversed(order):
            g = grads.pop(id(node), None)
            if g is None:
                continue
            if node._backward is None:
                node.grad = g if node.grad is None else node.grad + g
                continue
            for parent, pg in zip(node._parents, node._backward(g)):
                if pg is None or not parent.requires_grad:
                    continue
                key = id(parent)
                grads[key] = pg if key not in grads else grads[key] + pg

    # operator sugar
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(_wrap(other), self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, idx):
        return take(self, idx)


def _wrap(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _make(data, parents, backward) -> Tensor:
    out = Tensor(data)
    if _grad_enabled and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = parents
        out._backward = backward
    return out


def _unbroadcast(g: np.ndarray, shape) -> np.ndarray:
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, n in enumerate(shape):
        if n == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g


def add(a, b) -> Tensor:
    a, b = _wrap(a), _wrap(b)
    return _make(a.data + b.data, (a, b),
                 lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)))


def sub(a, b) -> Tensor:
    a, b = _wrap(a), _wrap(b)
    return _make(a.data - b.data, (a, b),
                 lambda g: (_unbroadcast(g, a.shape), -_unbroadcast(g, b.shape)))


def mul(a, b) -> Tensor:
    a, b = _wrap(a), _wrap(b)
    return _make(a.data * b.data, (a, b),
                 lambda g: (_unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)))


def matmul(x, w) -> Tensor:
    """``x[..., n] @ w[n, m]``."""
    x, w = _wrap(x), _wrap(w)
    # flatten leading axes: one GEMM instead of a stack of small ones
    x2 = x.data.reshape(-1, x.shape[-1])
    out_shape = x.shape[:-1] + (w.shape[-1],)

    def back(g):
        g2 = g.reshape(-1, g.shape[-1])
        return (g2 @ w.data.T).reshape(x.shape), x2.T @ g2

    return _make((x2 @ w.data).reshape(out_shape), (x, w), back)


def graph_sum(adj: np.ndarray, x) -> Tensor:
    """Sum over neighbors: ``out[..., i, :] = sum_j adj[i, j] * x[..., j, :]``."""
    x = _wrap(x)
    return _make(_mix_links(adj, x.data), (x,), lambda g: (_mix_links(adj.T, g),))


def _mix_links(adj: np.ndarray, x: np.ndarray) -> np.ndarray:
    if x.ndim == 2:
        return adj @ x
    moved = np.moveaxis(x, -2, 0)
    flat = moved.reshape(moved.shape[0], -1)
    return np.moveaxis((adj @ flat).reshape(moved.shape), 0, -2)


def tanh(x) -> Tensor:
    x = _wrap(x)
    y = np.tanh(x.data)
    return _make(y, (x,), lambda g: (g * (1.0 - y * y),))


def sigmoid(x) -> Tensor:
    x = _wrap(x)
    y = 0.5 * (1.0 + np.tanh(0.5 * x.data))
    return _make(y, (x,), lambda g: (g * y * (1.0 - y),))


def softplus(x) -> Tensor:
    x = _wrap(x)
    d = x.data
    y = np.logaddexp(0.0, d)
    return _make(y, (x,), lambda g: (g * 0.5 * (1.0 + np.tanh(0.5 * d)),))


def absolute(x) -> Tensor:
    x = _wrap(x)
    return _make(np.abs(x.data), (x,), lambda g: (g * np.sign(x.data),))


def log(x) -> Tensor:
    x = _wrap(x)
    return _make(np.log(x.data), (x,), lambda g: (g / x.data,))


def reciprocal(x) -> Tensor:
    x = _wrap(x)
    y = 1.0 / x.data
    return _make(y, (x,), lambda g: (-g * y * y,))


def concat(tensors, axis: int = -1) -> Tensor:
    tensors = [_wrap(t) for t in tensors]
    sizes = [t.shape[axis] for t in tensors]
    cuts = np.cumsum(sizes)[:-1]
    return _make(np.concatenate([t.data for t in tensors], axis=axis), tuple(tensors),
                 lambda g: tuple(np.split(g, cuts, axis=axis)))


def take(x, idx) -> Tensor:
    x = _wrap(x)
    basic = all(isinstance(i, (slice, int, type(Ellipsis))) for i in (idx if isinstance(idx, tuple) else (idx,)))

    def back(g):
        full = np.zeros_like(x.data)
        if basic:
            full[idx] = g
        else:
            np.add.at(full, idx, g)
        return (full,)

    return _make(x.data[idx], (x,), back)


def repeat_batch(x, times: int) -> Tensor:
    """Repeat each leading-axis entry ``times`` times consecutively."""
    x = _wrap(x)
    n = x.shape[0]
    return _make(np.repeat(x.data, times, axis=0), (x,),
                 lambda g: (g.reshape((n, times) + g.shape[1:]).sum(axis=1),))


def total(x) -> Tensor:
    x = _wrap(x)
    return _make(np.array(x.data.sum()), (x,), lambda g: (np.broadcast_to(g, x.shape).copy(),))
