"""Pre-norm transformer block with explicit forward/backward passes.

Parameters live in flat ``dict[str, ndarray]`` maps; a block reads the keys
``{prefix}ln1_g, ln1_b, wq, bq, wk, bk, wv, bv, wo, bo, ln2_g, ln2_b, w1, b1,
w2, b2``, where ``bk`` is optional. Every ``*_forward`` returns
``(output, cache)`` and the matching ``*_backward`` consumes the cache.

Linear weights are stored (out, in) and applied as ``x @ w.T + b``.
"""
from __future__ import annotations

import numpy as np

from . import rope2d
from .numkit import gelu, gelu_grad, softmax_rows

LN_EPS = 1e-6

BLOCK_KEYS = (
    "ln1_g", "ln1_b", "wq", "bq", "wk", "bk", "wv", "bv", "wo", "bo",
    "ln2_g", "ln2_b", "w1", "b1", "w2", "b2",
)


def init_block(rng: np.random.Generator, d: int, d_mlp: int, prefix: str, std: float = 0.02,
               key_bias: bool = True) -> dict:
    """Block parameters; ``key_bias=False`` omits ``bk``, which has no effect without RoPE."""
    p = {}
    p[f"{prefix}ln1_g"] = np.ones(d)
    p[f"{prefix}ln1_b"] = np.zeros(d)
    for name in ("q", "k", "v", "o"):
        p[f"{prefix}w{name}"] = rng.normal(0.0, std, (d, d))
        p[f"{prefix}b{name}"] = np.zeros(d)
    if not key_bias:
        del p[f"{prefix}bk"]
    p[f"{prefix}ln2_g"] = np.ones(d)
    p[f"{prefix}ln2_b"] = np.zeros(d)
    p[f"{prefix}w1"] = rng.normal(0.0, std, (d_mlp, d))
    p[f"{prefix}b1"] = np.zeros(d_mlp)
    p[f"{prefix}w2"] = rng.normal(0.0, std, (d, d_mlp))
    p[f"{prefix}b2"] = np.zeros(d)
    return p


def linear_backward(dy, x, w):
    return dy @ w, dy.T @ x, dy.sum(axis=0)


def layer_norm_forward(x, g, b, eps=LN_EPS):
    mu = x.mean(axis=-1, keepdims=True)
    xc = x - mu
    rstd = 1.0 / np.sqrt((xc * xc).mean(axis=-1, keepdims=True) + eps)
    xhat = xc * rstd
    return xhat * g + b, (xhat, rstd, g)


def layer_norm_backward(dy, cache):
    xhat, rstd, g = cache
    dg = (dy * xhat).sum(axis=0)
    db = dy.sum(axis=0)
    dxhat = dy * g
    dx = rstd * (
        dxhat
        - dxhat.mean(axis=-1, keepdims=True)
        - xhat * (dxhat * xhat).mean(axis=-1, keepdims=True)
    )
    return dx, dg, db


def _split_heads(x, heads):
    n, d = x.shape
    return x.reshape(n, heads, d // heads).transpose(1, 0, 2)


def _merge_heads(x):
    h, n, hd = x.shape
    return x.transpose(1, 0, 2).reshape(n, h * hd)


def attention_forward(h, p, prefix, heads, table=None, coords=None, causal=False):
    """Multi-head self-attention on (N, d) rows.

    With ``table`` set, queries and keys of every head are rotated by 2D RoPE
    at the per-token ``coords`` (N, 2) before the scaled dot product.
    """
    n, d = h.shape
    hd = d // heads
    q = _split_heads(h @ p[f"{prefix}wq"].T + p[f"{prefix}bq"], heads)
    k = h @ p[f"{prefix}wk"].T
    if f"{prefix}bk" in p:
        k = k + p[f"{prefix}bk"]
    k = _split_heads(k, heads)
    v = _split_heads(h @ p[f"{prefix}wv"].T + p[f"{prefix}bv"], heads)
    if table is not None:
        q = rope2d.rotate(q, coords[:, 0], coords[:, 1], table)
        k = rope2d.rotate(k, coords[:, 0], coords[:, 1], table)
    scale = 1.0 / np.sqrt(hd)
    scores = (q @ k.transpose(0, 2, 1)) * scale
    if causal:
        scores = np.where(np.triu(np.ones((n, n), dtype=bool), k=1), -np.inf, scores)
    attn = softmax_rows(scores)
    ctx = _merge_heads(attn @ v)
    out = ctx @ p[f"{prefix}wo"].T + p[f"{prefix}bo"]
    cache = (h, q, k, v, attn, ctx, scale, heads, table, coords, prefix)
    return out, cache


def attention_backward(dout, p, cache):
    h, q, k, v, attn, ctx, scale, heads, table, coords, prefix = cache
    g = {}
    dctx, g[f"{prefix}wo"], g[f"{prefix}bo"] = linear_backward(dout, ctx, p[f"{prefix}wo"])
    dctx = _split_heads(dctx, heads)
    dattn = dctx @ v.transpose(0, 2, 1)
    dv = attn.transpose(0, 2, 1) @ dctx
    dscores = attn * (dattn - (dattn * attn).sum(axis=-1, keepdims=True))
    dq = (dscores @ k) * scale
    dk = (dscores.transpose(0, 2, 1) @ q) * scale
    if table is not None:
        dq = rope2d.rotate(dq, coords[:, 0], coords[:, 1], table, inverse=True)
        dk = rope2d.rotate(dk, coords[:, 0], coords[:, 1], table, inverse=True)
    dh = np.zeros_like(h)
    for name, dproj in (("q", dq), ("k", dk), ("v", dv)):
        dx, g[f"{prefix}w{name}"], db = linear_backward(_merge_heads(dproj), h, p[f"{prefix}w{name}"])
        if f"{prefix}b{name}" in p:
            g[f"{prefix}b{name}"] = db
        dh += dx
    return dh, g


def mlp_forward(h, p, prefix):
    a = h @ p[f"{prefix}w1"].T + p[f"{prefix}b1"]
    z = gelu(a)
    return z @ p[f"{prefix}w2"].T + p[f"{prefix}b2"], (h, a, z, prefix)


def mlp_backward(dout, p, cache):
    h, a, z, prefix = cache
    g = {}
    dz, g[f"{prefix}w2"], g[f"{prefix}b2"] = linear_backward(dout, z, p[f"{prefix}w2"])
    da = dz * gelu_grad(a)
    dh, g[f"{prefix}w1"], g[f"{prefix}b1"] = linear_backward(da, h, p[f"{prefix}w1"])
    return dh, g


def block_forward(x, p, prefix, heads, table=None, coords=None, causal=False):
    """x + attn(ln1(x)), then + mlp(ln2(.))."""
    h1, ln1 = layer_norm_forward(x, p[f"{prefix}ln1_g"], p[f"{prefix}ln1_b"])
    a, att = attention_forward(h1, p, prefix, heads, table, coords, causal)
    x1 = x + a
    h2, ln2 = layer_norm_forward(x1, p[f"{prefix}ln2_g"], p[f"{prefix}ln2_b"])
    m, mlp = mlp_forward(h2, p, prefix)
    return x1 + m, (ln1, att, ln2, mlp, prefix)


def block_backward(dout, p, cache):
    ln1, att, ln2, mlp, prefix = cache
    dh2, g = mlp_backward(dout, p, mlp)
    dx1, g[f"{prefix}ln2_g"], g[f"{prefix}ln2_b"] = layer_norm_backward(dh2, ln2)
    dx1 = dx1 + dout
    dh1, ga = attention_backward(dx1, p, att)
    g.update(ga)
    dx, g[f"{prefix}ln1_g"], g[f"{prefix}ln1_b"] = layer_norm_backward(dh1, ln1)
    return dx + dx1, g
