"""Slow, loop-level reference implementations.

Nothing here shares code with the vectorised paths it is used to check:
products are explicit loops, trig comes from ``math``, and attention is
unrolled token by token.
"""
from __future__ import annotations

import math

import numpy as np

from .numkit import central_diff_grad


def matmul_loops(a, b):
    a, b = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
    n, k = a.shape
    m = b.shape[1]
    out = np.zeros((n, m))
    for i in range(n):
        for j in range(m):
            s = 0.0
            for t in range(k):
                s += a[i, t] * b[t, j]
            out[i, j] = s
    return out


def erf_series(x: float, terms: int = 200) -> float:
    """Maclaurin series of erf, summed until terms vanish.

    Cancellation grows like exp(x**2); keep |x| <= 2.5 for ~1e-14 accuracy.
    """
    total, term, n = 0.0, x, 0
    while n < terms:
        contrib = term / (2 * n + 1)
        total += contrib
        if abs(contrib) < 1e-18 * max(1.0, abs(total)):
            break
        n += 1
        term *= -x * x / n
    return 2.0 / math.sqrt(math.pi) * total


def erfc_cf(z: float, terms: int = 80) -> float:
    """erfc(z) for z > 0 from its continued fraction, evaluated bottom-up."""
    tail = z
    for k in range(terms, 0, -1):
        tail = z + (k / 2.0) / tail
    return math.exp(-z * z) / math.sqrt(math.pi) / tail


def erf_ref(z: float) -> float:
    if abs(z) <= 2.5:
        return erf_series(z)
    return math.copysign(1.0 - erfc_cf(abs(z)), z)


def gelu_ref(x: float) -> float:
    return x * 0.5 * (1.0 + erf_ref(x / math.sqrt(2.0)))


def _ln(v, g, b, eps):
    n = len(v)
    mu = sum(v) / n
    var = sum((x - mu) ** 2 for x in v) / n
    r = 1.0 / math.sqrt(var + eps)
    return [(v[i] - mu) * r * g[i] + b[i] for i in range(n)]


def _affine(w, b, x):
    return [sum(w[i][j] * x[j] for j in range(len(x))) + b[i] for i in range(len(w))]


def _rope_vec(v, m, n):
    d = len(v)
    half = d // 2
    out = list(v)
    for part, p in ((0, m), (half, n)):
        for i in range(1, d // 4 + 1):
            theta = 10000.0 ** (-2.0 * i / d)
            c, s = math.cos(p * theta), math.sin(p * theta)
            a, bb = v[part + 2 * i - 2], v[part + 2 * i - 1]
            out[part + 2 * i - 2] = c * a - s * bb
            out[part + 2 * i - 1] = s * a + c * bb
    return out


def rope_ref(v, m, n):
    return np.array(_rope_vec([float(x) for x in v], m, n))


def attention_ref(x, p, prefix, heads, coords=None, causal=False, eps=1e-6):
    """x + attn(ln1(x)) computed token by token; returns a nested list."""
    x = [[float(v) for v in row] for row in np.asarray(x)]
    P = {k: np.asarray(v).tolist() for k, v in p.items() if k.startswith(prefix)}
    g = lambda k: P[prefix + k]  # noqa: E731
    N, d = len(x), len(x[0])
    P.setdefault(prefix + "bk", [0.0] * d)
    hd = d // heads
    h = [_ln(row, g("ln1_g"), g("ln1_b"), eps) for row in x]
    q = [_affine(g("wq"), g("bq"), r) for r in h]
    k = [_affine(g("wk"), g("bk"), r) for r in h]
    v = [_affine(g("wv"), g("bv"), r) for r in h]
    ctx = [[0.0] * d for _ in range(N)]
    for hh in range(heads):
        sl = slice(hh * hd, (hh + 1) * hd)
        qh = [row[sl] for row in q]
        kh = [row[sl] for row in k]
        if coords is not None:
            qh = [_rope_vec(qh[t], int(coords[t][0]), int(coords[t][1])) for t in range(N)]
            kh = [_rope_vec(kh[t], int(coords[t][0]), int(coords[t][1])) for t in range(N)]
        for t in range(N):
            limit = t + 1 if causal else N
            s = [sum(qh[t][i] * kh[u][i] for i in range(hd)) / math.sqrt(hd) for u in range(limit)]
            mx = max(s)
            e = [math.exp(z - mx) for z in s]
            tot = sum(e)
            for u in range(limit):
                w = e[u] / tot
                for i in range(hd):
                    ctx[t][hh * hd + i] += w * v[u][hh * hd + i]
    out = [_affine(g("wo"), g("bo"), c) for c in ctx]
    return [[x[t][i] + out[t][i] for i in range(d)] for t in range(N)]


def block_ref(x, p, prefix, heads, coords=None, causal=False, eps=1e-6):
    x1 = attention_ref(x, p, prefix, heads, coords, causal, eps)
    P = {k: np.asarray(v).tolist() for k, v in p.items() if k.startswith(prefix)}
    out = []
    for row in x1:
        h = _ln(row, P[prefix + "ln2_g"], P[prefix + "ln2_b"], eps)
        a = [gelu_ref(z) for z in _affine(P[prefix + "w1"], P[prefix + "b1"], h)]
        m = _affine(P[prefix + "w2"], P[prefix + "b2"], a)
        out.append([row[i] + m[i] for i in range(len(row))])
    return out


def decoder_ref(emb, p, n_layers, heads, eps=1e-6):
    """Unrolled toy decoder: positions, causal blocks, final norm, tied head."""
    emb = np.asarray(emb)
    pos = np.asarray(p["pos_emb"])
    x = [[float(emb[t, i] + pos[t, i]) for i in range(emb.shape[1])] for t in range(emb.shape[0])]
    for layer in range(n_layers):
        x = block_ref(x, p, f"dec.{layer}.", heads, causal=True, eps=eps)
    g, b = np.asarray(p["lnf_g"]).tolist(), np.asarray(p["lnf_b"]).tolist()
    table = np.asarray(p["tok_emb"]).tolist()
    logits = []
    for row in x:
        h = _ln(row, g, b, eps)
        logits.append([sum(e[i] * h[i] for i in range(len(h))) for e in table])
    return np.array(logits)


def bilinear_half(grid):
    """Bilinear resample of an even (H, W, C) grid to (H/2, W/2, C) at output-pixel centres."""
    grid = np.asarray(grid, dtype=float)
    H, W, C = grid.shape
    out = np.zeros((H // 2, W // 2, C))
    for oi in range(H // 2):
        for oj in range(W // 2):
            # centre of output pixel in input pixel coordinates (half-pixel convention)
            y = (oi + 0.5) * 2 - 0.5
            x = (oj + 0.5) * 2 - 0.5
            y0, x0 = int(math.floor(y)), int(math.floor(x))
            fy, fx = y - y0, x - x0
            for c in range(C):
                out[oi, oj, c] = (
                    (1 - fy) * (1 - fx) * grid[y0, x0, c]
                    + (1 - fy) * fx * grid[y0, x0 + 1, c]
                    + fy * (1 - fx) * grid[y0 + 1, x0, c]
                    + fy * fx * grid[y0 + 1, x0 + 1, c]
                )
    return out


def prune_masks_ref(planes, tau):
    """Per-site keep masks from an explicit distance table; planes is a list of (N, d) arrays."""
    masks = [[True] * len(planes[0])]
    for p in range(1, len(planes)):
        row = []
        for site in range(len(planes[p])):
            d = len(planes[p][site])
            dist = sum(abs(float(planes[p][site][i]) - float(planes[p - 1][site][i])) for i in range(d)) / d
            row.append(not (dist < tau or dist == 0.0))
        masks.append(row)
    return masks


def numeric_grads(loss, params: dict, names=None, h: float = 1e-5) -> dict:
    """Central-difference gradient of ``loss(params)`` for each named tensor."""
    out = {}
    for name in names if names is not None else list(params):
        orig = params[name]

        def f(v, name=name):
            params[name] = v
            return loss(params)

        try:
            out[name] = central_diff_grad(f, orig, h)
        finally:
            params[name] = orig
    return out
