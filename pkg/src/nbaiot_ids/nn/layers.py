"""Layer primitives with hand-derived gradients.

Activations are laid out ``(batch, length, channels)``. Every ``*_forward`` returns
its output plus whatever the matching ``*_backward`` needs; backward functions take
the upstream gradient and return the input gradient followed by parameter gradients.
"""

from __future__ import annotations

import math

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy.special import erf

LN_EPS = 1e-6
CE_FLOOR = 1e-12

_INV_SQRT2 = 1.0 / math.sqrt(2.0)
_INV_SQRT2PI = 1.0 / math.sqrt(2.0 * math.pi)


def _check_odd(k: int) -> None:
    if k % 2 != 1:
        raise ValueError(f"kernel size must be odd for centred same padding, got {k}")


# -- Conv1D (same padding, cross-correlation with centred index) --------------

def conv1d_forward(x: np.ndarray, w: np.ndarray, b: np.ndarray):
    """``y[n,t,f] = b[f] + sum_{c,k} w[f,c,k] * x[n, t + k - K//2, c]``, zero padded.

    ``x`` is ``(N, L, C)``; ``w`` is ``(F, C, K)``.
    """
    n, length, c_in = x.shape
    f, c_w, k = w.shape
    if c_w != c_in or b.shape != (f,):
        raise ValueError(f"conv1d shape mismatch: input channels {c_in}, weight {w.shape}, bias {b.shape}")
    _check_odd(k)
    pad = k // 2
    xp = np.pad(x, ((0, 0), (pad, pad), (0, 0)))
    cols = sliding_window_view(xp, k, axis=1).reshape(n * length, c_in * k)
    y = cols @ w.reshape(f, c_in * k).T + b
    return y.reshape(n, length, f), cols


def conv1d_backward(dy: np.ndarray, cols: np.ndarray, w: np.ndarray):
    n, length, f = dy.shape
    _, c_in, k = w.shape
    dy2 = dy.reshape(n * length, f)
    dw = (dy2.T @ cols).reshape(w.shape)
    db = dy2.sum(axis=0)
    dcols = (dy2 @ w.reshape(f, c_in * k)).reshape(n, length, c_in, k)
    dxp = np.zeros((n, length + k - 1, c_in), dtype=dy.dtype)
    for j in range(k):
        dxp[:, j : j + length, :] += dcols[..., j]
    pad = k // 2
    return dxp[:, pad : pad + length, :], dw, db


# -- Depthwise Conv1D -------------------------------------------------------

def depthwise_forward(x: np.ndarray, w: np.ndarray, b: np.ndarray):
    """Per-channel same-padded conv: ``y[n,t,d] = b[d] + sum_k w[d,k] * x[n, t+k-K//2, d]``."""
    n, length, d = x.shape
    if w.shape[0] != d or b.shape != (d,):
        raise ValueError(f"depthwise shape mismatch: channels {d}, weight {w.shape}, bias {b.shape}")
    k = w.shape[1]
    _check_odd(k)
    pad = k // 2
    xp = np.pad(x, ((0, 0), (pad, pad), (0, 0)))
    y = np.broadcast_to(b, x.shape).copy()
    for j in range(k):
        y += xp[:, j : j + length, :] * w[:, j]
    return y, xp


def depthwise_backward(dy: np.ndarray, xp: np.ndarray, w: np.ndarray):
    n, length, d = dy.shape
    k = w.shape[1]
    dw = np.empty_like(w)
    dxp = np.zeros_like(xp)
    for j in range(k):
        dw[:, j] = np.einsum("ntd,ntd->d", dy, xp[:, j : j + length, :])
        dxp[:, j : j + length, :] += dy * w[:, j]
    pad = k // 2
    return dxp[:, pad : pad + length, :], dw, dy.sum(axis=(0, 1))


# -- LayerNorm over the channel axis ------------------------------------------

def layernorm_forward(x: np.ndarray, gamma: np.ndarray, beta: np.ndarray, eps: float = LN_EPS):
    # Shifting by the first channel makes constant rows centre to exactly zero.
    xs = x - x[..., :1]
    xc = xs - xs.mean(axis=-1, keepdims=True)
    var = (xc * xc).mean(axis=-1, keepdims=True)
    inv_std = 1.0 / np.sqrt(var + eps)
    xhat = xc * inv_std
    return xhat * gamma + beta, (xhat, inv_std)


def layernorm_backward(dy: np.ndarray, cache, gamma: np.ndarray):
    xhat, inv_std = cache
    axes = tuple(range(dy.ndim - 1))
    dgamma = (dy * xhat).sum(axis=axes)
    dbeta = dy.sum(axis=axes)
    dxhat = dy * gamma
    dx = inv_std * (
        dxhat - dxhat.mean(axis=-1, keepdims=True) - xhat * (dxhat * xhat).mean(axis=-1, keepdims=True)
    )
    return dx, dgamma, dbeta


def layernorm(x: np.ndarray, gamma: np.ndarray, beta: np.ndarray, eps: float = LN_EPS) -> np.ndarray:
    return layernorm_forward(x, gamma, beta, eps)[0]


# -- Pointwise activations -----------------------------------------------------

def relu(x: np.ndarray) -> np.ndarray:
    return np.maximum(x, 0)


def relu_backward(dy: np.ndarray, x: np.ndarray) -> np.ndarray:
    return dy * (x > 0)


def gelu_forward(x: np.ndarray):
    """Exact GELU ``x * Phi(x)``; also returns ``Phi(x)`` for the backward pass."""
    cdf = 0.5 * (1.0 + erf(x * _INV_SQRT2))
    return x * cdf, cdf


def gelu(x: np.ndarray) -> np.ndarray:
    return gelu_forward(x)[0]


def gelu_backward(dy: np.ndarray, x: np.ndarray, cdf: np.ndarray | None = None) -> np.ndarray:
    if cdf is None:
        cdf = 0.5 * (1.0 + erf(x * _INV_SQRT2))
    pdf = np.exp(-0.5 * x * x) * _INV_SQRT2PI
    return dy * (cdf + x * pdf)


# -- Dense ----------------------------------------------------------------------

def dense_forward(x: np.ndarray, w: np.ndarray, b: np.ndarray) -> np.ndarray:
    """``z = x @ W.T + b`` with ``W`` stored ``(out, in)``."""
    if x.shape[-1] != w.shape[1] or b.shape != (w.shape[0],):
        raise ValueError(f"dense shape mismatch: input {x.shape}, weight {w.shape}, bias {b.shape}")
    return x @ w.T + b


def dense_backward(dz: np.ndarray, x: np.ndarray, w: np.ndarray):
    return dz @ w, dz.T @ x, dz.sum(axis=0)


# -- Dropout --------------------------------------------------------------------

def dropout(x: np.ndarray, p: float, training: bool, rng: np.random.Generator | None = None):
    """Inverted dropout. Returns ``(output, mask)``; the mask is None at inference.

    Survivors are scaled by ``1/(1-p)`` so the expectation is unchanged.
    """
    if not 0 <= p < 1:
        raise ValueError(f"dropout rate must be in [0, 1), got {p}")
    if not training or p == 0:
        return x, None
    if rng is None:
        raise ValueError("training-mode dropout needs a random generator")
    keep = rng.random(x.shape) >= p
    mask = (keep / (1.0 - p)).astype(x.dtype)
    return x * mask, mask


def dropout_backward(dy: np.ndarray, mask: np.ndarray | None) -> np.ndarray:
    return dy if mask is None else dy * mask


# -- Softmax / cross-entropy ---------------------------------------------------

def softmax(z: np.ndarray) -> np.ndarray:
    e = np.exp(z - z.max(axis=-1, keepdims=True))
    return e / e.sum(axis=-1, keepdims=True)


def cross_entropy(probs: np.ndarray, onehot: np.ndarray) -> float:
    """Mean categorical cross-entropy, ``-mean_n sum_c y ln max(p, 1e-12)``."""
    probs = np.asarray(probs)
    onehot = np.asarray(onehot)
    if probs.shape != onehot.shape or probs.ndim != 2:
        raise ValueError(f"cross_entropy shape mismatch: {probs.shape} vs {onehot.shape}")
    logp = np.log(np.maximum(probs.astype(np.float64), CE_FLOOR))
    return float(-(onehot * logp).sum() / probs.shape[0])


def flatten(x: np.ndarray) -> np.ndarray:
    """Row-major flatten of the trailing ``(L, D)`` axes: ``out[t*D + c] = x[t, c]``."""
    return x.reshape(*x.shape[:-2], x.shape[-2] * x.shape[-1])
