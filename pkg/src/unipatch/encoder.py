"""ViT encoder whose self-attention rotates queries/keys with 2D RoPE.

One code path serves images, volumes and videos: whatever tokens survive
reduction are stacked plane-major into an (N, d_model) matrix and attend to
each other without a mask. Only the within-plane (m, n) coordinates are
encoded; plane order is carried by token order alone.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from . import layers
from .errors import ConfigError, ShapeError
from .rope2d import RopeTable
from .vistream import PATCH

INIT_STD = 0.02


@dataclass(frozen=True)
class EncoderConfig:
    layers: int = 2
    d_model: int = 8
    d_mlp: int = 16
    heads: int = 2
    patch: int = PATCH

    def __post_init__(self):
        if self.layers < 0 or self.d_model < 1 or self.d_mlp < 1 or self.heads < 1:
            raise ConfigError(f"invalid encoder sizes: {self}")
        if self.d_model % self.heads:
            raise ConfigError(f"d_model={self.d_model} not divisible by heads={self.heads}")
        if self.head_dim % 4:
            raise ConfigError(f"head_dim={self.head_dim} must be divisible by 4 for 2D RoPE")

    @property
    def head_dim(self) -> int:
        return self.d_model // self.heads

    @classmethod
    def desk(cls, layers: int = 2, d_model: int = 8, heads: int = 2) -> "EncoderConfig":
        return cls(layers=layers, d_model=d_model, d_mlp=2 * d_model, heads=heads)

    @classmethod
    def full_scale(cls) -> "EncoderConfig":
        return cls(layers=27, d_model=1152, d_mlp=4304, heads=16)


# EncoderParams: flat name -> array map, see init_params for the keys.
EncoderParams = dict


@lru_cache(maxsize=None)
def rope_table(head_dim: int) -> RopeTable:
    return RopeTable(head_dim)


def init_params(config: EncoderConfig, seed: int) -> EncoderParams:
    """Weights ~ N(0, 0.02), norms at gain 1 / bias 0, deterministic per seed."""
    if not isinstance(config, EncoderConfig):
        raise ConfigError("init_params expects an EncoderConfig")
    rng = np.random.default_rng(seed)
    d = config.d_model
    p = {
        "embed_w": rng.normal(0.0, INIT_STD, (d, config.patch * config.patch)),
        "embed_b": np.zeros(d),
    }
    for i in range(config.layers):
        p.update(layers.init_block(rng, d, config.d_mlp, f"layers.{i}.", INIT_STD))
    p["lnf_g"] = np.ones(d)
    p["lnf_b"] = np.zeros(d)
    return p


def attention_block(tokens, coords, params: EncoderParams, rope: RopeTable, heads: int, layer: int = 0):
    """Pre-norm residual attention of one layer: x + attn(ln1(x))."""
    x = np.asarray(tokens, dtype=np.float64)
    coords = np.asarray(coords, dtype=np.int64)
    prefix = f"layers.{layer}."
    d = params[f"{prefix}wq"].shape[0]
    if x.ndim != 2 or x.shape[1] != d:
        raise ShapeError("token width differs from attention width", x.shape, (d,))
    if coords.shape != (x.shape[0], 2):
        raise ShapeError("one (m, n) pair per token required", coords.shape, x.shape)
    if d // heads != rope.d:
        raise ShapeError("head_dim differs from RoPE table", (d // heads,), (rope.d,))
    h, _ = layers.layer_norm_forward(x, params[f"{prefix}ln1_g"], params[f"{prefix}ln1_b"])
    out, _ = layers.attention_forward(h, params, prefix, heads, rope, coords)
    return x + out


def forward_tokens(x, coords, params: EncoderParams, config: EncoderConfig):
    """Run the block stack and final norm on (N, d_model) tokens; returns (H_v, cache)."""
    x = np.asarray(x, dtype=np.float64)
    coords = np.asarray(coords, dtype=np.int64)
    if x.ndim != 2 or x.shape[1] != config.d_model:
        raise ShapeError("token width differs from d_model", x.shape, (config.d_model,))
    if coords.shape != (x.shape[0], 2):
        raise ShapeError("one (m, n) pair per token required", coords.shape, x.shape)
    table = rope_table(config.head_dim)
    caches = []
    for i in range(config.layers):
        x, c = layers.block_forward(x, params, f"layers.{i}.", config.heads, table, coords)
        caches.append(c)
    out, lnf = layers.layer_norm_forward(x, params["lnf_g"], params["lnf_b"])
    return out, (caches, lnf)


def backward_tokens(d_out, params: EncoderParams, cache):
    """Gradients of a scalar loss w.r.t. input tokens and every block/final-norm parameter."""
    caches, lnf = cache
    grads = {}
    dx, grads["lnf_g"], grads["lnf_b"] = layers.layer_norm_backward(d_out, lnf)
    for c in reversed(caches):
        dx, g = layers.block_backward(dx, params, c)
        grads.update(g)
    return dx, grads


def encoder_forward(seq, params: EncoderParams, config: EncoderConfig) -> np.ndarray:
    """H_v for the kept tokens of a PrunedSequence, one row per kept token."""
    tokens, prov = seq.kept_tokens()
    out, _ = forward_tokens(tokens, prov[:, 1:], params, config)
    return out
