"""Hot numeric kernels: numba-jitted versions with a pure-numpy fallback.

Backend selection happens once at import time. Set QINTENT_NUMBA=0 to force
the numpy path (useful for debugging and for the backend benchmark). Float64
inputs always take the numpy path; the jitted kernels are compiled for the
float32 arrays used in training and inference.
"""

from __future__ import annotations

import math
import os

import numpy as np
from scipy.special import erf as _np_erf

_INV_SQRT2 = 0.7071067811865476
_INV_SQRT_2PI = 0.3989422804014327

try:
    from numba import njit

    _NUMBA_AVAILABLE = True
except ImportError:  # pragma: no cover
    _NUMBA_AVAILABLE = False

USE_NUMBA = _NUMBA_AVAILABLE and os.environ.get("QINTENT_NUMBA", "1") != "0"


# ---------------------------------------------------------------------------
# numpy reference implementations
# ---------------------------------------------------------------------------


def _gelu_fwd_np(x):
    return (0.5 * x * (1.0 + _np_erf(x * _INV_SQRT2))).astype(x.dtype)


def _gelu_bwd_np(x, g):
    cdf = 0.5 * (1.0 + _np_erf(x * _INV_SQRT2))
    pdf = np.exp(-0.5 * x * x) * _INV_SQRT_2PI
    return (g * (cdf + x * pdf)).astype(x.dtype)


def _softmax_rows_np(x2d):
    m = x2d.max(axis=1, keepdims=True)
    e = np.exp(x2d - m)
    return e / e.sum(axis=1, keepdims=True)


def _adam_update_np(p, g, m, v, lr, beta1, beta2, eps, bc1, bc2):
    m *= beta1
    m += (1.0 - beta1) * g
    v *= beta2
    v += (1.0 - beta2) * g * g
    p -= lr * (m / bc1) / (np.sqrt(v / bc2) + eps)


# ---------------------------------------------------------------------------
# numba implementations
# ---------------------------------------------------------------------------

if _NUMBA_AVAILABLE:

    @njit(cache=True)
    def _gelu_fwd_nb(x):
        out = np.empty_like(x)
        flat_x = x.ravel()
        flat_o = out.ravel()
        for i in range(flat_x.size):
            xi = flat_x[i]
            flat_o[i] = 0.5 * xi * (1.0 + math.erf(xi * _INV_SQRT2))
        return out

    @njit(cache=True)
    def _gelu_bwd_nb(x, g):
        out = np.empty_like(x)
        flat_x = x.ravel()
        flat_g = g.ravel()
        flat_o = out.ravel()
        for i in range(flat_x.size):
            xi = flat_x[i]
            cdf = 0.5 * (1.0 + math.erf(xi * _INV_SQRT2))
            pdf = math.exp(-0.5 * xi * xi) * _INV_SQRT_2PI
            flat_o[i] = flat_g[i] * (cdf + xi * pdf)
        return out

    @njit(cache=True)
    def _softmax_rows_nb(x2d):
        out = np.empty_like(x2d)
        for r in range(x2d.shape[0]):
            row = x2d[r]
            m = row[0]
            for j in range(1, row.size):
                if row[j] > m:
                    m = row[j]
            s = 0.0
            for j in range(row.size):
                e = math.exp(row[j] - m)
                out[r, j] = e
                s += e
            for j in range(row.size):
                out[r, j] /= s
        return out

    @njit(cache=True)
    def _adam_update_nb(p, g, m, v, lr, beta1, beta2, eps, bc1, bc2):
        for i in range(p.size):
            gi = g[i]
            m[i] = beta1 * m[i] + (1.0 - beta1) * gi
            v[i] = beta2 * v[i] + (1.0 - beta2) * gi * gi
            p[i] -= lr * (m[i] / bc1) / (math.sqrt(v[i] / bc2) + eps)


def _use_nb(*arrays):
    return USE_NUMBA and all(a.dtype == np.float32 for a in arrays)


# ---------------------------------------------------------------------------
# public dispatchers
# ---------------------------------------------------------------------------


def gelu(x):
    if _use_nb(x):
        return _gelu_fwd_nb(np.ascontiguousarray(x))
    return _gelu_fwd_np(x)


def gelu_grad(x, g):
    if _use_nb(x, g):
        return _gelu_bwd_nb(np.ascontiguousarray(x), np.ascontiguousarray(g))
    return _gelu_bwd_np(x, g)


def softmax_last(x):
    """Softmax over the trailing axis of an arbitrary-rank array."""
    x2d = np.ascontiguousarray(x).reshape(-1, x.shape[-1])
    if _use_nb(x2d):
        return _softmax_rows_nb(x2d).reshape(x.shape)
    return _softmax_rows_np(x2d).reshape(x.shape).astype(x.dtype)


def adam_update(param, grad, m, v, lr, beta1, beta2, eps, step):
    """In-place Adam update on flattened views. `step` is 1-based."""
    bc1 = 1.0 - beta1**step
    bc2 = 1.0 - beta2**step
    p, g = param.ravel(), np.ascontiguousarray(grad).ravel()
    mf, vf = m.ravel(), v.ravel()
    if _use_nb(p, g, mf, vf):
        _adam_update_nb(p, g, mf, vf, lr, beta1, beta2, eps, bc1, bc2)
    else:
        _adam_update_np(p, g, mf, vf, lr, beta1, beta2, eps, bc1, bc2)


def backend_name():
    return "numba" if USE_NUMBA else "numpy"
