"""Two-dimensional rotary position embedding.

A feature vector of width ``d`` is split into a height half and a width
half. Inside each half, adjacent feature pairs ``(2i-1, 2i)`` (1-based) are
rotated by ``p * theta_i`` where ``p`` is the row index ``m`` for the first
half and the column index ``n`` for the second, and
``theta_i = 10000 ** (-2 i / d)`` for ``i = 1 .. d/4``.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, ShapeError
from .numkit import DTYPE

BASE = 10000.0
DEFAULT_MAX_POSITION = 1024


def rope_frequencies(d: int) -> np.ndarray:
    if d < 4 or d % 4:
        raise ConfigError(f"RoPE width must be a positive multiple of 4, got {d}")
    i = np.arange(1, d // 4 + 1, dtype=DTYPE)
    return BASE ** (-2.0 * i / d)


@dataclass(frozen=True)
class RopeTable:
    """Frequencies plus cached cos/sin for positions ``0 .. max_position-1``.

    Positions outside the cache (including negative ones) are evaluated on
    the fly, so the cache never changes results.
    """

    d: int
    max_position: int = DEFAULT_MAX_POSITION
    freqs: np.ndarray = field(init=False, repr=False)
    cos: np.ndarray = field(init=False, repr=False)
    sin: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        freqs = rope_frequencies(self.d)
        angles = np.arange(self.max_position, dtype=DTYPE)[:, None] * freqs[None, :]
        object.__setattr__(self, "freqs", freqs)
        object.__setattr__(self, "cos", np.cos(angles))
        object.__setattr__(self, "sin", np.sin(angles))
        for arr in (freqs, self.cos, self.sin):
            arr.setflags(write=False)

    def cos_sin(self, positions) -> tuple[np.ndarray, np.ndarray]:
        """cos/sin of ``p * theta_i`` with shape ``positions.shape + (d/4,)``."""
        pos = np.asarray(positions, dtype=np.int64)
        inside = (pos >= 0) & (pos < self.max_position)
        if np.all(inside):
            return self.cos[pos], self.sin[pos]
        angles = pos[..., None].astype(DTYPE) * self.freqs
        return np.cos(angles), np.sin(angles)


@dataclass
class PositionedVector:
    values: np.ndarray
    m: int
    n: int


def _rotate_half(x, cos, sin, sign):
    # x: (..., d/2) laid out as consecutive (even, odd) pairs
    a = x[..., 0::2]
    b = x[..., 1::2]
    out = np.empty_like(x)
    out[..., 0::2] = a * cos - sign * b * sin
    out[..., 1::2] = sign * a * sin + b * cos
    return out


def rotate(x, m, n, table: RopeTable, inverse: bool = False) -> np.ndarray:
    """Apply 2D RoPE row-wise to ``x`` of shape (..., N, d) at positions m, n (N,).

    ``inverse=True`` applies the transposed rotation, which is also the
    backward pass of the forward rotation.
    """
    x = np.asarray(x, dtype=DTYPE)
    if x.shape[-1] != table.d:
        raise ShapeError("feature width differs from RoPE table", x.shape, (table.d,))
    half = table.d // 2
    cm, sm = table.cos_sin(m)
    cn, sn = table.cos_sin(n)
    sign = -1.0 if inverse else 1.0
    return np.concatenate(
        [
            _rotate_half(x[..., :half], cm, sm, sign),
            _rotate_half(x[..., half:], cn, sn, sign),
        ],
        axis=-1,
    )


def apply_rope2d(v: PositionedVector, table: RopeTable) -> np.ndarray:
    values = np.asarray(v.values, dtype=DTYPE)
    if values.shape != (table.d,):
        raise ShapeError("vector width differs from RoPE table", values.shape, (table.d,))
    return rotate(values[None], np.array([v.m]), np.array([v.n]), table)[0]


def rope_dot(q: PositionedVector, k: PositionedVector, table: RopeTable) -> float:
    if np.shape(q.values) != np.shape(k.values):
        raise ShapeError("query/key widths differ", np.shape(q.values), np.shape(k.values))
    return float(apply_rope2d(q, table) @ apply_rope2d(k, table))
