"""Dense float64 kernels used by every other module.

Matrices are plain ``numpy.ndarray`` objects of dtype float64; the helpers
here add the shape checks and numerically stable forms the rest of the
package relies on.
"""
from __future__ import annotations

from typing import Callable

import numpy as np
from scipy.special import ndtr

from .errors import ShapeError

DTYPE = np.float64


def as_matrix(a) -> np.ndarray:
    m = np.asarray(a, dtype=DTYPE)
    if m.ndim != 2:
        raise ShapeError("expected a 2-D matrix", m.shape)
    return m


def matmul(a, b) -> np.ndarray:
    """Matrix product with an explicit shape check."""
    a = as_matrix(a)
    b = as_matrix(b)
    if a.shape[1] != b.shape[0]:
        raise ShapeError("matmul inner dimensions differ", a.shape, b.shape)
    return a @ b


def softmax_rows(m) -> np.ndarray:
    """Row-wise softmax, stabilised by subtracting each row's max.

    Entries equal to ``-inf`` (masked positions) map to exactly zero.
    """
    m = np.asarray(m, dtype=DTYPE)
    shifted = m - m.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def gelu(x):
    # exact form x * Phi(x); ndtr is the standard normal CDF
    x = np.asarray(x, dtype=DTYPE)
    out = x * ndtr(x)
    return out if out.ndim else float(out)


def gelu_grad(x):
    x = np.asarray(x, dtype=DTYPE)
    pdf = np.exp(-0.5 * x * x) / np.sqrt(2.0 * np.pi)
    return ndtr(x) + x * pdf


def layer_norm(v, gain, bias, eps: float = 1e-6) -> np.ndarray:
    """Normalise the last axis to zero mean / unit variance, then scale and shift.

    Works on a single vector or row-wise on a matrix.
    """
    v = np.asarray(v, dtype=DTYPE)
    gain = np.asarray(gain, dtype=DTYPE)
    bias = np.asarray(bias, dtype=DTYPE)
    if gain.shape != v.shape[-1:] or bias.shape != v.shape[-1:]:
        raise ShapeError("layer_norm length mismatch", v.shape, gain.shape, bias.shape)
    if eps <= 0:
        raise ValueError("eps must be positive")
    mu = v.mean(axis=-1, keepdims=True)
    var = ((v - mu) ** 2).mean(axis=-1, keepdims=True)
    return (v - mu) / np.sqrt(var + eps) * gain + bias


def downsample2x(grid) -> np.ndarray:
    """Halve a (H, W, C) grid by bilinear sampling at 2x2 block centres.

    Sampling at the centre of each 2x2 block weights its four members
    equally, so the result is the block mean. Trailing rows/columns of an
    odd-sized grid form partial blocks averaged over their actual members.
    """
    g = np.asarray(grid, dtype=DTYPE)
    if g.ndim != 3 or g.shape[0] == 0 or g.shape[1] == 0:
        raise ShapeError("downsample2x expects a non-empty (H, W, C) grid", g.shape)
    h, w, c = g.shape
    oh, ow = -(-h // 2), -(-w // 2)
    sums = np.zeros((oh, ow, c), dtype=DTYPE)
    counts = np.zeros((oh, ow, 1), dtype=DTYPE)
    for di in (0, 1):
        for dj in (0, 1):
            part = g[di::2, dj::2]
            sums[: part.shape[0], : part.shape[1]] += part
            counts[: part.shape[0], : part.shape[1]] += 1.0
    return sums / counts


def central_diff_grad(f: Callable[[np.ndarray], float], p, h: float = 1e-5) -> np.ndarray:
    """Numerical gradient of a scalar function by central differences."""
    if h <= 0:
        raise ValueError("step h must be positive")
    p = np.array(p, dtype=DTYPE)
    flat = p.reshape(-1)
    grad = np.empty_like(flat)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        fp = float(f(p))
        flat[i] = orig - h
        fm = float(f(p))
        flat[i] = orig
        if not (np.isfinite(fp) and np.isfinite(fm)):
            raise FloatingPointError(f"non-finite evaluation at coordinate {i}")
        grad[i] = (fp - fm) / (2.0 * h)
    return grad.reshape(p.shape)


def relative_error(analytic, numeric) -> float:
    """Normwise relative error ||a - n|| / max(||a||, ||n||), 0 when both vanish."""
    a = np.asarray(analytic, dtype=DTYPE)
    n = np.asarray(numeric, dtype=DTYPE)
    denom = max(np.linalg.norm(a), np.linalg.norm(n))
    if denom == 0.0:
        return 0.0
    return float(np.linalg.norm(a - n) / denom)
