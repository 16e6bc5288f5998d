"""Minimal reverse-mode autodiff over float64 numpy arrays.

Everything is dense and row-major.  A Tensor wraps an ndarray plus an
optional gradient buffer; ops build an acyclic graph that `backward`
walks in reverse topological order.
"""

from __future__ import annotations

import numpy as np


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward", "name")

    def __init__(self, data, requires_grad=False, parents=(), backward=None, name=""):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad = None
        self.requires_grad = bool(requires_grad) or any(p.requires_grad for p in parents)
        self._parents = parents
        self._backward = backward
        self.name = name

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def size(self):
        return self.data.size

    def _accum(self, g):
        if not self.requires_grad:
            return
        if self.grad is None:
            self.grad = np.zeros_like(self.data)
        self.grad += g

    def zero_grad(self):
        self.grad = None

    # ---- graph walk ----

    def backward(self):
        if self.data.size != 1:
            raise ValueError("backward() requires a scalar loss, got shape %r" % (self.shape,))
        topo: list[Tensor] = []
        seen: set[int] = set()
        stack = [(self, False)]
        while stack:
            node, done = stack.pop()
            if done:
                topo.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if id(p) not in seen:
                    stack.append((p, False))
        self.grad = np.ones_like(self.data)
        for node in reversed(topo):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)

    # ---- operators ----

    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return add(self, mul(other, -1.0))

    def __rsub__(self, other):
        return add(mul(self, -1.0), other)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(self, other)

    def __truediv__(self, other):
        other = as_tensor(other)
        return mul(self, power(other, -1.0))

    def __rtruediv__(self, other):
        return mul(as_tensor(other), power(self, -1.0))

    def __neg__(self):
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def __repr__(self):
        return f"Tensor(shape={self.shape}, grad={'yes' if self.requires_grad else 'no'})"


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum gradient g down to `shape` (inverse of numpy broadcasting)."""
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for ax, n in enumerate(shape):
        if n == 1 and g.shape[ax] != 1:
            g = g.sum(axis=ax, keepdims=True)
    return g


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    out = Tensor(a.data + b.data, parents=(a, b))

    def bw(g):
        a._accum(_unbroadcast(g, a.shape))
        b._accum(_unbroadcast(g, b.shape))

    out._backward = bw
    return out


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    out = Tensor(a.data * b.data, parents=(a, b))

    def bw(g):
        a._accum(_unbroadcast(g * b.data, a.shape))
        b._accum(_unbroadcast(g * a.data, b.shape))

    out._backward = bw
    return out


def power(a, p: float) -> Tensor:
    a = as_tensor(a)
    out = Tensor(a.data ** p, parents=(a,))

    def bw(g):
        a._accum(g * p * a.data ** (p - 1.0))

    out._backward = bw
    return out


def exp(a) -> Tensor:
    a = as_tensor(a)
    val = np.exp(a.data)
    out = Tensor(val, parents=(a,))
    out._backward = lambda g: a._accum(g * val)
    return out


def log(a) -> Tensor:
    a = as_tensor(a)
    out = Tensor(np.log(a.data), parents=(a,))
    out._backward = lambda g: a._accum(g / a.data)
    return out


def sqrt(a) -> Tensor:
    return power(a, 0.5)


def tanh(a) -> Tensor:
    a = as_tensor(a)
    val = np.tanh(a.data)
    out = Tensor(val, parents=(a,))
    out._backward = lambda g: a._accum(g * (1.0 - val * val))
    return out


def relu(a) -> Tensor:
    a = as_tensor(a)
    mask = a.data > 0
    out = Tensor(a.data * mask, parents=(a,))
    out._backward = lambda g: a._accum(g * mask)
    return out


def matmul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    out = Tensor(a.data @ b.data, parents=(a, b))

    def bw(g):
        ga = g @ np.swapaxes(b.data, -1, -2)
        gb = np.swapaxes(a.data, -1, -2) @ g
        a._accum(_unbroadcast(ga, a.shape))
        b._accum(_unbroadcast(gb, b.shape))

    out._backward = bw
    return out


def tsum(a, axis=None, keepdims=False) -> Tensor:
    a = as_tensor(a)
    out = Tensor(a.data.sum(axis=axis, keepdims=keepdims), parents=(a,))

    def bw(g):
        if axis is None:
            a._accum(np.broadcast_to(g, a.shape).copy())
            return
        if not keepdims:
            g = np.expand_dims(g, axis)
        a._accum(np.broadcast_to(g, a.shape).copy())

    out._backward = bw
    return out


def tmean(a, axis=None, keepdims=False) -> Tensor:
    a = as_tensor(a)
    n = a.size if axis is None else a.shape[axis]
    return mul(tsum(a, axis=axis, keepdims=keepdims), 1.0 / n)


def softmax(a, axis: int = -1) -> Tensor:
    """Numerically stable softmax; rows along `axis` sum to 1."""
    a = as_tensor(a)
    z = a.data - a.data.max(axis=axis, keepdims=True)
    e = np.exp(z)
    val = e / e.sum(axis=axis, keepdims=True)
    out = Tensor(val, parents=(a,))

    def bw(g):
        dot = (g * val).sum(axis=axis, keepdims=True)
        a._accum(val * (g - dot))

    out._backward = bw
    return out


def reshape(a, shape) -> Tensor:
    a = as_tensor(a)
    out = Tensor(a.data.reshape(shape), parents=(a,))
    out._backward = lambda g: a._accum(g.reshape(a.shape))
    return out


def transpose(a, axes) -> Tensor:
    a = as_tensor(a)
    out = Tensor(a.data.transpose(axes), parents=(a,))
    inv = np.argsort(axes)
    out._backward = lambda g: a._accum(g.transpose(inv))
    return out


def concat(tensors, axis: int = 0) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    out = Tensor(np.concatenate([t.data for t in tensors], axis=axis), parents=tuple(tensors))
    sizes = [t.shape[axis] for t in tensors]
    splits = np.cumsum(sizes)[:-1]

    def bw(g):
        for t, piece in zip(tensors, np.split(g, splits, axis=axis)):
            t._accum(piece)

    out._backward = bw
    return out


def take_rows(a, idx) -> Tensor:
    """Gather rows along the first axis; gradient scatter-adds (embedding lookup)."""
    a = as_tensor(a)
    idx = np.asarray(idx, dtype=np.intp)
    out = Tensor(a.data[idx], parents=(a,))

    def bw(g):
        if not a.requires_grad:
            return
        buf = np.zeros_like(a.data)
        np.add.at(buf, idx, g)
        a._accum(buf)

    out._backward = bw
    return out


def pad_last_rows(a, n: int) -> Tensor:
    """Pad n copies of the final row along axis -2 (used by the halving pool)."""
    a = as_tensor(a)
    if n == 0:
        return a
    last = a.data[..., -1:, :]
    out = Tensor(np.concatenate([a.data, np.repeat(last, n, axis=-2)], axis=-2), parents=(a,))

    def bw(g):
        core = g[..., : a.shape[-2], :].copy()
        core[..., -1, :] += g[..., a.shape[-2]:, :].sum(axis=-2)
        a._accum(core)

    out._backward = bw
    return out


def dropout(a, rate: float, rng: np.random.Generator | None, train: bool) -> Tensor:
    a = as_tensor(a)
    if not train or rate <= 0.0:
        return a
    mask = (rng.random(a.shape) >= rate) / (1.0 - rate)
    return mul(a, Tensor(mask))


def grad_check(params: list[Tensor], loss_fn, rel_tol=1e-4, abs_tol=1e-7, eps=1e-6,
               max_entries=20, rng=None) -> float:
    """Compare analytic gradients against central finite differences.

    Returns the worst relative error over the sampled parameter entries;
    raises AssertionError when any entry exceeds both tolerances.
    """
    rng = rng or np.random.default_rng(0)
    for p in params:
        p.zero_grad()
    loss = loss_fn()
    loss.backward()
    analytic = [None if p.grad is None else p.grad.copy() for p in params]
    worst = 0.0
    for p, ga in zip(params, analytic):
        if ga is None:
            ga = np.zeros_like(p.data)
        flat = p.data.reshape(-1)
        n = flat.size
        picks = range(n) if n <= max_entries else rng.choice(n, size=max_entries, replace=False)
        for i in picks:
            old = flat[i]
            flat[i] = old + eps
            up = float(loss_fn().data)
            flat[i] = old - eps
            dn = float(loss_fn().data)
            flat[i] = old
            num = (up - dn) / (2 * eps)
            ana = ga.reshape(-1)[i]
            err = abs(num - ana)
            rel = err / max(abs(num), abs(ana), 1e-12)
            if err > abs_tol and rel > rel_tol:
                raise AssertionError(
                    f"grad mismatch at param entry {i}: analytic={ana:.6g} numeric={num:.6g}")
            worst = max(worst, min(rel, err))
    return worst
