"""Reverse-mode automatic differentiation over numpy arrays.

Define-by-run: every op records a backward closure on its result. Calling
``backward()`` on a scalar loss walks the tape and deposits gradients into
the ``grad`` buffers of *trainable* leaf tensors only; frozen leaves never
receive a gradient buffer and subgraphs without trainable leaves are skipped
entirely during both graph recording and the backward sweep.
"""

from __future__ import annotations

import numpy as np
from scipy.special import expit as _expit

from . import kernels
from .errors import ConfigError, GraphError, NumericsError, ShapeError


class Tensor:
    """Dense array with optional gradient, a name, and a trainable flag."""

    __slots__ = ("data", "grad", "name", "trainable", "requires_grad", "_parents", "_bw")

    def __init__(self, data, name="", trainable=False, dtype=np.float32):
        self.data = np.asarray(data, dtype=dtype)
        self.grad = None
        self.name = name
        self.trainable = bool(trainable)
        self.requires_grad = self.trainable
        self._parents = ()
        self._bw = None

    @property
    def shape(self):
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    def item(self):
        if self.data.size != 1:
            raise ShapeError(f"item() on tensor of shape {self.data.shape}")
        return float(self.data.reshape(()))

    def check_finite(self, what="tensor"):
        if not np.all(np.isfinite(self.data)):
            raise NumericsError(f"non-finite values in {what} '{self.name}'")
        return self

    def backward(self):
        """Backpropagate from this scalar; returns {name: grad} for trainable leaves."""
        if self.data.size != 1:
            raise ShapeError(f"backward() requires a scalar loss, got shape {self.data.shape}")
        if self._bw is None and not self._parents:
            raise GraphError("backward() called before any forward computation")
        topo = []
        seen = set()
        stack = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                topo.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if p.requires_grad and id(p) not in seen:
                    stack.append((p, False))
        grads = {id(self): np.ones_like(self.data)}
        collected = {}
        for node in reversed(topo):
            g = grads.pop(id(node), None)
            if g is None:
                continue
            if node._bw is not None:
                node._bw(g, grads)
            elif node.trainable:
                node.grad = g if node.grad is None else node.grad + g
                collected[node.name] = node.grad
        return collected

    # Arithmetic sugar used by heads and tests.
    def __add__(self, other):
        return add(self, _as_tensor(other, self.dtype))

    def __mul__(self, other):
        if isinstance(other, (int, float)):
            return scale(self, other)
        return mul(self, other)

    def __neg__(self):
        return scale(self, -1.0)

    def __sub__(self, other):
        return add(self, scale(_as_tensor(other, self.dtype), -1.0))

    def __repr__(self):
        tag = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.data.shape}, dtype={self.data.dtype}{tag})"


def _as_tensor(x, dtype=np.float32):
    return x if isinstance(x, Tensor) else Tensor(np.asarray(x), dtype=dtype)


def _result(data, parents, bw):
    t = Tensor.__new__(Tensor)
    t.data = data
    t.grad = None
    t.name = ""
    t.trainable = False
    t.requires_grad = any(p.requires_grad for p in parents)
    if t.requires_grad:
        t._parents = tuple(parents)
        t._bw = bw
    else:
        t._parents = ()
        t._bw = None
    return t


def _unbroadcast(g, shape):
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g.reshape(shape)


def _acc(grads, node, g):
    if not node.requires_grad:
        return
    g = _unbroadcast(g, node.data.shape)
    key = id(node)
    if key in grads:
        grads[key] = grads[key] + g
    else:
        grads[key] = g


# ---------------------------------------------------------------------------
# primitive ops
# ---------------------------------------------------------------------------


def add(a, b):
    try:
        out = a.data + b.data
    except ValueError:
        raise ShapeError(
            f"add: shapes {a.data.shape} ('{a.name}') and {b.data.shape} ('{b.name}') do not broadcast"
        ) from None

    def bw(g, grads):
        _acc(grads, a, g)
        _acc(grads, b, g)

    return _result(out, (a, b), bw)


def mul(a, b):
    try:
        out = a.data * b.data
    except ValueError:
        raise ShapeError(
            f"mul: shapes {a.data.shape} ('{a.name}') and {b.data.shape} ('{b.name}') do not broadcast"
        ) from None

    def bw(g, grads):
        _acc(grads, a, g * b.data)
        _acc(grads, b, g * a.data)

    return _result(out, (a, b), bw)


def scale(a, c):
    c = float(c)

    def bw(g, grads):
        _acc(grads, a, g * c)

    return _result(a.data * np.asarray(c, dtype=a.dtype), (a,), bw)


def add_const(a, const):
    const = np.asarray(const, dtype=a.dtype)

    def bw(g, grads):
        _acc(grads, a, g)

    return _result(a.data + const, (a,), bw)


def matmul(a, b):
    try:
        out = a.data @ b.data
    except ValueError:
        raise ShapeError(
            f"matmul: shapes {a.data.shape} ('{a.name}') and {b.data.shape} ('{b.name}') do not compose"
        ) from None

    def bw(g, grads):
        if a.requires_grad:
            _acc(grads, a, g @ np.swapaxes(b.data, -1, -2))
        if b.requires_grad:
            if b.data.ndim == 2 and a.data.ndim > 2:
                ga = a.data.reshape(-1, a.data.shape[-1]).T @ g.reshape(-1, g.shape[-1])
                _acc(grads, b, ga)
            else:
                _acc(grads, b, np.swapaxes(a.data, -1, -2) @ g)

    return _result(out, (a, b), bw)


def reshape(a, shape):
    def bw(g, grads):
        _acc(grads, a, g.reshape(a.data.shape))

    return _result(a.data.reshape(shape), (a,), bw)


def transpose(a, axes):
    inv = np.argsort(axes)

    def bw(g, grads):
        _acc(grads, a, np.transpose(g, inv))

    return _result(np.transpose(a.data, axes), (a,), bw)


def embedding(table, ids):
    ids = np.asarray(ids)
    out = table.data[ids]

    def bw(g, grads):
        buf = np.zeros_like(table.data)
        np.add.at(buf, ids, g)
        _acc(grads, table, buf)

    return _result(out, (table,), bw)


def select_position(x, pos=0):
    """(B,T,D) -> (B,D) at sequence position ``pos`` (CLS extraction)."""

    def bw(g, grads):
        buf = np.zeros_like(x.data)
        buf[:, pos, :] = g
        _acc(grads, x, buf)

    return _result(x.data[:, pos, :], (x,), bw)


def tsum(a, axis=None, keepdims=False):
    out = a.data.sum(axis=axis, keepdims=keepdims)

    def bw(g, grads):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        _acc(grads, a, np.broadcast_to(g, a.data.shape).astype(a.dtype))

    return _result(np.asarray(out, dtype=a.dtype), (a,), bw)


def tmean(a, axis=None, keepdims=False):
    count = a.data.size if axis is None else a.data.shape[axis]
    return scale(tsum(a, axis=axis, keepdims=keepdims), 1.0 / count)


def sigmoid(a):
    s = _expit(a.data).astype(a.dtype)

    def bw(g, grads):
        _acc(grads, a, g * s * (1.0 - s))

    return _result(s, (a,), bw)


def gelu(a):
    out = kernels.gelu(a.data)

    def bw(g, grads):
        _acc(grads, a, kernels.gelu_grad(a.data, g))

    return _result(out, (a,), bw)


def softmax(a):
    """Softmax over the trailing axis."""
    s = kernels.softmax_last(a.data)

    def bw(g, grads):
        dot = (g * s).sum(axis=-1, keepdims=True)
        _acc(grads, a, s * (g - dot))

    return _result(s, (a,), bw)


def log(a, eps=1e-7):
    clipped = np.maximum(a.data, eps)
    interior = a.data > eps

    def bw(g, grads):
        _acc(grads, a, np.where(interior, g / clipped, 0.0).astype(a.dtype))

    return _result(np.log(clipped), (a,), bw)


def layer_norm(x, gamma, beta, eps=1e-12):
    """Normalize the trailing axis; constant inputs map to beta."""
    mu = x.data.mean(axis=-1, keepdims=True)
    xc = x.data - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = (xc * inv).astype(x.dtype)
    out = xhat * gamma.data + beta.data

    def bw(g, grads):
        if gamma.requires_grad:
            _acc(grads, gamma, g * xhat)
        if beta.requires_grad:
            _acc(grads, beta, g)
        if x.requires_grad:
            dxhat = g * gamma.data
            m1 = dxhat.mean(axis=-1, keepdims=True)
            m2 = (dxhat * xhat).mean(axis=-1, keepdims=True)
            _acc(grads, x, (inv * (dxhat - m1 - xhat * m2)).astype(x.dtype))

    return _result(out.astype(x.dtype), (x, gamma, beta), bw)


def dropout(x, rate, rng, training):
    """Inverted dropout. Identity when not training or rate == 0."""
    if not training or rate <= 0.0:
        return x
    if rng is None:
        raise ConfigError("dropout in training mode requires an explicit RNG")
    keep = (rng.random(x.data.shape) >= rate).astype(x.dtype) / np.asarray(1.0 - rate, dtype=x.dtype)

    def bw(g, grads):
        _acc(grads, x, g * keep)

    return _result(x.data * keep, (x,), bw)


def bce(probs, targets, eps=1e-7):
    """Summed binary cross-entropy of probabilities against 0/1 targets."""
    y = np.asarray(targets, dtype=np.float64)
    if y.shape != probs.data.shape:
        raise ShapeError(f"bce: targets shape {y.shape} != predictions shape {probs.data.shape}")
    p = np.clip(probs.data.astype(np.float64), eps, 1.0 - eps)
    loss = -(y * np.log(p) + (1.0 - y) * np.log(1.0 - p)).sum()
    interior = (probs.data > eps) & (probs.data < 1.0 - eps)

    def bw(g, grads):
        dp = np.where(interior, -(y / p) + (1.0 - y) / (1.0 - p), 0.0)
        _acc(grads, probs, (g * dp).astype(probs.dtype))

    return _result(np.asarray(loss, dtype=probs.dtype), (probs,), bw)


# ---------------------------------------------------------------------------
# optimizer
# ---------------------------------------------------------------------------


class AdamState:
    """Per-parameter first/second moment buffers plus a shared step counter."""

    def __init__(self, beta1=0.9, beta2=0.999, eps=1e-8):
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.step = 0
        self.m = {}
        self.v = {}


def adam_step(params, state, learning_rate):
    """One Adam update over all trainable params that received gradients.

    Frozen tensors are never touched. Parameters with no gradient this step
    (e.g. unused embedding rows never occur: gathers produce dense grads)
    are skipped.
    """
    if learning_rate <= 0:
        raise ConfigError(f"learning rate must be positive, got {learning_rate}")
    state.step += 1
    for name, p in params.items():
        if not p.trainable or p.grad is None:
            continue
        if not np.all(np.isfinite(p.grad)):
            raise NumericsError(f"non-finite gradient for '{name}'")
        if name not in state.m:
            state.m[name] = np.zeros_like(p.data)
            state.v[name] = np.zeros_like(p.data)
        if state.m[name].shape != p.data.shape:
            raise ShapeError(f"Adam state shape {state.m[name].shape} != param '{name}' {p.data.shape}")
        kernels.adam_update(
            p.data, p.grad, state.m[name], state.v[name],
            learning_rate, state.beta1, state.beta2, state.eps, state.step,
        )
    return params


def zero_grads(params):
    for p in params.values():
        p.grad = None


# ---------------------------------------------------------------------------
# gradient verification
# ---------------------------------------------------------------------------


def finite_difference_check(fn, points, eps=1e-3):
    """Compare analytic gradients of ``fn`` against central differences.

    ``fn`` maps a list of float64 Tensors to a scalar Tensor. ``points`` is a
    list of numpy arrays (the evaluation point, one per input). Returns the
    max over all components of |g_analytic - g_fd| / max(1, |g_fd|).
    """
    if not 1e-5 <= eps <= 1e-2:
        raise ConfigError(f"eps must be in [1e-5, 1e-2], got {eps}")
    leaves = [Tensor(np.asarray(p, dtype=np.float64), name=f"x{i}", trainable=True, dtype=np.float64)
              for i, p in enumerate(points)]
    out = fn(leaves)
    if not np.isfinite(out.data).all():
        raise NumericsError("non-finite forward value in finite_difference_check")
    out.backward()
    worst = 0.0
    for leaf in leaves:
        analytic = leaf.grad if leaf.grad is not None else np.zeros_like(leaf.data)
        flat = leaf.data.reshape(-1)
        for j in range(flat.size):
            orig = flat[j]
            flat[j] = orig + eps
            hi = fn([Tensor(l.data.copy(), dtype=np.float64) if l is not leaf else leaf for l in leaves]).item()
            flat[j] = orig - eps
            lo = fn([Tensor(l.data.copy(), dtype=np.float64) if l is not leaf else leaf for l in leaves]).item()
            flat[j] = orig
            if not (np.isfinite(hi) and np.isfinite(lo)):
                raise NumericsError("non-finite perturbed value in finite_difference_check")
            g_fd = (hi - lo) / (2.0 * eps)
            g_an = analytic.reshape(-1)[j]
            worst = max(worst, abs(g_an - g_fd) / max(1.0, abs(g_fd)))
    return worst
