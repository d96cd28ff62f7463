"""Cross-module property harness.

    unipatch-verify --seed 0
    unipatch-verify --seed 0 --suite rope2d --suite tokred

Each suite draws from its own generator derived from the master seed and
runs its properties in order; suites run concurrently. A summary JSON goes
to stdout and the exit status is nonzero if any property fails.
"""
from __future__ import annotations

import argparse
import json
import math
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass

import numpy as np

from . import encoder as enc
from . import fusion as fu
from . import oracles, rope2d
from .numkit import central_diff_grad, gelu, layer_norm, matmul, relative_error, softmax_rows
from .pipeline import PipelineConfig, run_pipeline
from .projector import ProjectorParams, project, project_backward
from .rope2d import RopeTable
from .tokred import merge_2x2, prune_interplane
from .vistream import PlaneSequence, SourceKind, TokenPlane, VisualInput, decompose, embed_patches, patchify

TRIALS = 1000
GRAD_TOL = 1e-5
GRAD_STEP = 1e-5
MUTATIONS = ("rope_sign_flip",)


@dataclass
class PropertyResult:
    suite: str
    name: str
    trials: int
    failures: int
    max_error: float
    tolerance: float

    @property
    def passed(self) -> bool:
        return self.failures == 0


class Context:
    def __init__(self, rng: np.random.Generator, trials: int = TRIALS, mutation: str | None = None):
        self.rng = rng
        self.trials = trials
        self.mutation = mutation

    def rotate(self, x, m, n, table, inverse=False):
        if self.mutation == "rope_sign_flip":
            return _sign_flipped_rotate(x, m, n, table)
        return rope2d.rotate(x, m, n, table, inverse)


def _sign_flipped_rotate(x, m, n, table):
    # deliberately broken rotation: the lower sin term has the wrong sign
    def half(v, c, s):
        a, b = v[..., 0::2], v[..., 1::2]
        out = np.empty_like(v)
        out[..., 0::2] = a * c - b * s
        out[..., 1::2] = -a * s + b * c
        return out

    h = table.d // 2
    cm, sm = table.cos_sin(m)
    cn, sn = table.cos_sin(n)
    return np.concatenate([half(x[..., :h], cm, sm), half(x[..., h:], cn, sn)], axis=-1)


SUITES: dict[str, list] = {}


def prop(suite: str, tol: float):
    def register(fn):
        SUITES.setdefault(suite, []).append((fn.__name__, tol, fn))
        return fn
    return register


# numkit ---------------------------------------------------------------

@prop("numkit", 1e-10)
def matmul_associativity(ctx):
    errs = []
    for _ in range(ctx.trials):
        n, k, l, m = ctx.rng.integers(1, 6, 4)
        a, b, c = ctx.rng.normal(size=(n, k)), ctx.rng.normal(size=(k, l)), ctx.rng.normal(size=(l, m))
        errs.append(np.abs(matmul(matmul(a, b), c) - matmul(a, matmul(b, c))).max())
    return errs


@prop("numkit", 1e-12)
def matmul_matches_loops(ctx):
    errs = []
    for _ in range(ctx.trials):
        n, k, m = ctx.rng.integers(1, 6, 3)
        a, b = ctx.rng.normal(size=(n, k)), ctx.rng.normal(size=(k, m))
        errs.append(np.abs(matmul(a, b) - oracles.matmul_loops(a, b)).max())
    return errs


@prop("numkit", 1e-12)
def softmax_rows_sum_to_one(ctx):
    m = ctx.rng.uniform(-1e3, 1e3, (ctx.trials, 7))
    s = softmax_rows(m)
    bad = np.where(s.min(axis=1) < 0, np.inf, 0.0)
    return np.abs(s.sum(axis=1) - 1.0) + bad


@prop("numkit", 1e-10)
def gelu_odd_part_is_identity(ctx):
    x = ctx.rng.uniform(-10, 10, ctx.trials)
    return np.abs(gelu(x) - gelu(-x) - x)


@prop("numkit", 1e-10)
def gelu_matches_erf_series(ctx):
    x = ctx.rng.uniform(-6, 6, ctx.trials)
    return [abs(gelu(float(v)) - oracles.gelu_ref(float(v))) for v in x]


@prop("numkit", 1e-10)
def layer_norm_moments(ctx):
    errs = []
    for _ in range(ctx.trials):
        d = int(ctx.rng.integers(2, 33))
        v = ctx.rng.normal(0, ctx.rng.uniform(0.5, 5), d) + ctx.rng.normal(0, 10)
        y = layer_norm(v, np.ones(d), np.zeros(d), eps=1e-14)
        errs.append(max(abs(y.mean()), abs(y.var() - 1.0)))
    return errs


@prop("numkit", 1e-6)
def central_diff_exact_on_quadratics(ctx):
    errs = []
    for _ in range(ctx.trials // 10):
        d = int(ctx.rng.integers(1, 6))
        a, b, p = ctx.rng.normal(size=(d, d)), ctx.rng.normal(size=d), ctx.rng.normal(size=d)
        g = central_diff_grad(lambda x: x @ a @ x + b @ x, p, 1e-5)
        errs.append(np.abs(g - ((a + a.T) @ p + b)).max())
    return errs


# vistream -------------------------------------------------------------

@prop("vistream", 0)
def patch_count_sweep(ctx):
    errs = []
    for h in range(1, 101):
        for w in range(1, 101):
            g = patchify(np.zeros((h, w)))
            errs.append(abs(g.grid_h * g.grid_w - math.ceil(h / 16) * math.ceil(w / 16)))
    return errs


@prop("vistream", 0)
def patch_coordinate_round_trip(ctx):
    errs = []
    for _ in range(ctx.trials):
        h, w = ctx.rng.integers(1, 60, 2)
        patch = int(ctx.rng.integers(1, 17))
        plane = ctx.rng.uniform(size=(h, w))
        grid = patchify(plane, patch)
        padded = np.zeros((grid.grid_h * patch, grid.grid_w * patch))
        padded[:h, :w] = plane
        worst = 0.0
        for (m, n), vec in zip(grid.coords, grid.vectors.reshape(-1, patch * patch)):
            block = padded[m * patch:(m + 1) * patch, n * patch:(n + 1) * patch].ravel()
            worst = max(worst, float(np.abs(block - vec).max()))
        errs.append(worst)
    return errs


@prop("vistream", 0)
def decompose_commutes_with_patchify(ctx):
    errs = []
    for _ in range(ctx.trials):
        kind = [SourceKind.VOLUME3D, SourceKind.VIDEO][int(ctx.rng.integers(2))]
        planes = ctx.rng.uniform(size=(int(ctx.rng.integers(1, 6)), *ctx.rng.integers(1, 40, 2)))
        stride = int(ctx.rng.integers(1, 4))
        seq = decompose(VisualInput(kind, planes), stride)
        idx = range(0, len(planes), stride) if kind is SourceKind.VIDEO else range(len(planes))
        direct = [patchify(planes[i], 8).vectors for i in idx]
        via = [patchify(p, 8).vectors for p in seq.planes]
        same = len(direct) == len(via) and all(np.array_equal(a, b) for a, b in zip(direct, via))
        errs.append(0.0 if same else np.inf)
    return errs


@prop("vistream", 1e-12)
def embed_matches_loop_oracle(ctx):
    errs = []
    for _ in range(ctx.trials // 10):
        d = int(ctx.rng.integers(1, 9))
        grid = patchify(ctx.rng.uniform(size=ctx.rng.integers(1, 40, 2)), 4)
        w, b = ctx.rng.normal(size=(d, 16)), ctx.rng.normal(size=d)
        tp = embed_patches(grid, w, b)
        ref = np.array([oracles.matmul_loops(w, v[:, None])[:, 0] + b for v in grid.vectors.reshape(-1, 16)])
        errs.append(np.abs(tp.tokens - ref).max())
    return errs


# rope2d ---------------------------------------------------------------

def _rope_dots(ctx, table, q, k, pq, pk):
    rq = ctx.rotate(q, pq[:, 0], pq[:, 1], table)
    rk = ctx.rotate(k, pk[:, 0], pk[:, 1], table)
    return (rq * rk).sum(axis=1)


@prop("rope2d", 1e-9)
def relative_position_invariance(ctx):
    errs = []
    for d in (4, 8, 64):
        table = RopeTable(d)
        t = ctx.trials
        q, k = ctx.rng.normal(size=(t, d)), ctx.rng.normal(size=(t, d))
        pq, pk = ctx.rng.integers(0, 64, (t, 2)), ctx.rng.integers(0, 64, (t, 2))
        shift = ctx.rng.integers(-32, 200, (t, 2))
        base = _rope_dots(ctx, table, q, k, pq, pk)
        moved = _rope_dots(ctx, table, q, k, pq + shift, pk + shift)
        errs.extend(np.abs(base - moved))
    return errs


@prop("rope2d", 1e-12)
def norm_preservation(ctx):
    errs = []
    for d in (4, 8, 64):
        table = RopeTable(d)
        v = ctx.rng.normal(size=(ctx.trials, d))
        pos = ctx.rng.integers(0, 2000, (ctx.trials, 2))
        out = ctx.rotate(v, pos[:, 0], pos[:, 1], table)
        errs.extend(np.abs(np.linalg.norm(out, axis=1) - np.linalg.norm(v, axis=1)))
    return errs


@prop("rope2d", 1e-10)
def composition(ctx):
    errs = []
    for d in (4, 8, 64):
        table = RopeTable(d)
        v = ctx.rng.normal(size=(ctx.trials, d))
        a, b = ctx.rng.integers(0, 500, (ctx.trials, 2)), ctx.rng.integers(0, 500, (ctx.trials, 2))
        twice = ctx.rotate(ctx.rotate(v, a[:, 0], a[:, 1], table), b[:, 0], b[:, 1], table)
        once = ctx.rotate(v, a[:, 0] + b[:, 0], a[:, 1] + b[:, 1], table)
        errs.extend(np.abs(twice - once).max(axis=1))
    return errs


@prop("rope2d", 0)
def identity_at_origin(ctx):
    errs = []
    for d in (4, 8, 64):
        v = ctx.rng.normal(size=(ctx.trials, d))
        zero = np.zeros(ctx.trials, dtype=np.int64)
        errs.append(0.0 if np.array_equal(ctx.rotate(v, zero, zero, RopeTable(d)), v) else np.inf)
    return errs


@prop("rope2d", 1e-12)
def table_on_unit_circle(ctx):
    errs = []
    for d in (4, 8, 64, 72):
        t = RopeTable(d)
        errs.append(np.abs(t.cos ** 2 + t.sin ** 2 - 1.0).max())
        errs.append(0.0 if np.all(np.diff(t.freqs) < 0) or d == 4 else np.inf)
    return errs


@prop("rope2d", 1e-12)
def matches_trig_reference(ctx):
    errs = []
    for _ in range(ctx.trials // 10):
        d = int(ctx.rng.choice([4, 8, 16]))
        v = ctx.rng.normal(size=d)
        m, n = (int(x) for x in ctx.rng.integers(0, 100, 2))
        out = ctx.rotate(v[None], np.array([m]), np.array([n]), RopeTable(d))[0]
        errs.append(np.abs(out - oracles.rope_ref(v, m, n)).max())
    return errs


# tokred ---------------------------------------------------------------

def _random_sequence(rng, planes=None, gh=None, gw=None, d=None):
    P = planes or int(rng.integers(1, 5))
    gh = gh or int(rng.integers(1, 4))
    gw = gw or int(rng.integers(1, 4))
    d = d or int(rng.integers(1, 9))
    base = rng.normal(0, 0.1, (gh * gw, d))
    planes_ = []
    for _ in range(P):
        # mix of exact repeats, small and large changes so every branch is exercised
        mode = rng.integers(3, size=(gh * gw, 1))
        step = np.where(mode == 0, 0.0, np.where(mode == 1, rng.normal(0, 0.05, (gh * gw, d)),
                                                 rng.normal(0, 0.5, (gh * gw, d))))
        base = base + step
        planes_.append(TokenPlane(gh, gw, base.copy()))
    return PlaneSequence(SourceKind.VIDEO, planes_, list(range(P)))


@prop("tokred", 0)
def prune_matches_bruteforce(ctx):
    errs = []
    for _ in range(ctx.trials):
        seq = _random_sequence(ctx.rng)
        tau = float(ctx.rng.choice([0.0, 0.01, 0.05, 0.1, 0.3]))
        pruned, _ = prune_interplane(seq, tau)
        ref = oracles.prune_masks_ref([p.tokens for p in seq.planes], tau)
        errs.append(0.0 if all(np.array_equal(m, r) for m, r in zip(pruned.masks, ref)) else np.inf)
    return errs


@prop("tokred", 0)
def tau_monotonicity(ctx):
    errs = []
    for _ in range(ctx.trials):
        seq = _random_sequence(ctx.rng)
        t1, t2 = np.sort(ctx.rng.uniform(0, 0.5, 2))
        m1, _ = prune_interplane(seq, t1)
        m2, _ = prune_interplane(seq, t2)
        subset = all(np.all(~a <= ~b) for a, b in zip(m1.masks, m2.masks))
        errs.append(0.0 if subset else np.inf)
    return errs


@prop("tokred", 0)
def tau_extremes(ctx):
    errs = []
    for _ in range(ctx.trials):
        seq = _random_sequence(ctx.rng)
        zero, _ = prune_interplane(seq, 0.0)
        ok = all(
            np.array_equal(~zero.masks[p], np.all(seq.planes[p].tokens == seq.planes[p - 1].tokens, axis=1))
            for p in range(1, len(seq.planes))
        )
        inf, rep = prune_interplane(seq, math.inf)
        ok = ok and rep.total_after == seq.planes[0].tokens.shape[0] and inf.masks[0].all()
        errs.append(0.0 if ok else np.inf)
    return errs


@prop("tokred", 0)
def count_reconciliation(ctx):
    errs = []
    for _ in range(ctx.trials):
        seq = _random_sequence(ctx.rng)
        pruned, rep = prune_interplane(seq, float(ctx.rng.uniform(0, 0.3)))
        before = sum(p.grid_h * p.grid_w for p in seq.planes)
        ok = (rep.total_before == before and rep.total_after == before - rep.pruned
              and rep.total_after == pruned.kept_count and rep.rate == rep.pruned / before)
        errs.append(0.0 if ok else np.inf)
    return errs


@prop("tokred", 1e-14)
def merge_idempotent_on_constant(ctx):
    errs = []
    for _ in range(ctx.trials):
        gh, gw, d = (int(x) for x in ctx.rng.integers(1, 8, 3))
        t = ctx.rng.normal(size=d)
        once = merge_2x2(TokenPlane(gh, gw, np.tile(t, (gh * gw, 1))))
        twice = merge_2x2(once)
        errs.append(max(np.abs(once.tokens - t).max(), np.abs(twice.tokens - t).max()))
    return errs


@prop("tokred", 1e-12)
def merge_affine_equivariance(ctx):
    errs = []
    for _ in range(ctx.trials):
        gh, gw, d = (int(x) for x in ctx.rng.integers(1, 8, 3))
        x = ctx.rng.normal(size=(gh * gw, d))
        a, b = ctx.rng.normal(size=d), ctx.rng.normal(size=d)
        lhs = merge_2x2(TokenPlane(gh, gw, a * x + b)).tokens
        rhs = a * merge_2x2(TokenPlane(gh, gw, x)).tokens + b
        errs.append(np.abs(lhs - rhs).max())
    return errs


@prop("tokred", 1e-12)
def merge_is_bilinear_on_even_grids(ctx):
    errs = []
    for _ in range(ctx.trials // 10):
        gh, gw = 2 * ctx.rng.integers(1, 5, 2)
        d = int(ctx.rng.integers(1, 5))
        x = ctx.rng.normal(size=(gh, gw, d))
        merged = merge_2x2(TokenPlane(int(gh), int(gw), x.reshape(-1, d))).as_grid()
        errs.append(np.abs(merged - oracles.bilinear_half(x)).max())
    return errs


# encoder --------------------------------------------------------------

def _perturbed(params, rng, scale):
    return {k: v + rng.normal(0, scale, v.shape) for k, v in params.items()}


@prop("encoder", 1e-9)
def attention_weights_shift_invariant(ctx):
    from . import layers
    cfg = enc.EncoderConfig.desk()
    p = _perturbed(enc.init_params(cfg, 0), ctx.rng, 0.3)
    table = RopeTable(cfg.head_dim)
    errs = []
    for _ in range(ctx.trials):
        n = int(ctx.rng.integers(1, 8))
        x = ctx.rng.normal(size=(n, cfg.d_model))
        coords = ctx.rng.integers(0, 20, (n, 2))
        shift = ctx.rng.integers(0, 100, 2)
        h, _ = layers.layer_norm_forward(x, p["layers.0.ln1_g"], p["layers.0.ln1_b"])
        _, c0 = layers.attention_forward(h, p, "layers.0.", cfg.heads, table, coords)
        _, c1 = layers.attention_forward(h, p, "layers.0.", cfg.heads, table, coords + shift)
        errs.append(np.abs(c0[4] - c1[4]).max())
    return errs


@prop("encoder", 1e-10)
def permutation_equivariance(ctx):
    cfg = enc.EncoderConfig.desk()
    p = _perturbed(enc.init_params(cfg, 1), ctx.rng, 0.3)
    errs = []
    for _ in range(ctx.trials):
        n = int(ctx.rng.integers(1, 10))
        x = ctx.rng.normal(size=(n, cfg.d_model))
        coords = ctx.rng.integers(0, 20, (n, 2))
        perm = ctx.rng.permutation(n)
        a, _ = enc.forward_tokens(x, coords, p, cfg)
        b, _ = enc.forward_tokens(x[perm], coords[perm], p, cfg)
        errs.append(np.abs(a[perm] - b).max())
    return errs


@prop("encoder", 0)
def forward_is_deterministic(ctx):
    cfg = enc.EncoderConfig.desk()
    errs = []
    for _ in range(ctx.trials // 10):
        seed = int(ctx.rng.integers(1 << 30))
        p1, p2 = enc.init_params(cfg, seed), enc.init_params(cfg, seed)
        x = ctx.rng.normal(size=(6, cfg.d_model))
        coords = ctx.rng.integers(0, 20, (6, 2))
        same = all(np.array_equal(p1[k], p2[k]) for k in p1) and np.array_equal(
            enc.forward_tokens(x, coords, p1, cfg)[0], enc.forward_tokens(x, coords, p2, cfg)[0])
        errs.append(0.0 if same else np.inf)
    return errs


@prop("encoder", 1e-12)
def attention_matches_unrolled(ctx):
    cfg = enc.EncoderConfig(layers=1, d_model=8, d_mlp=16, heads=2)
    errs = []
    for _ in range(ctx.trials // 20):
        p = _perturbed(enc.init_params(cfg, int(ctx.rng.integers(1 << 30))), ctx.rng, 0.3)
        n = int(ctx.rng.integers(1, 6))
        x = ctx.rng.normal(size=(n, 8))
        coords = ctx.rng.integers(0, 30, (n, 2))
        fast = enc.attention_block(x, coords, p, RopeTable(4), 2)
        errs.append(np.abs(fast - np.array(oracles.attention_ref(x, p, "layers.0.", 2, coords))).max())
    return errs


# projector ------------------------------------------------------------

@prop("projector", 1e-12)
def row_independence(ctx):
    errs = []
    for _ in range(ctx.trials // 10):
        proj = ProjectorParams.init(8, 16, 12, seed=int(ctx.rng.integers(1 << 30)), std=0.5)
        h = ctx.rng.normal(size=(int(ctx.rng.integers(1, 10)), 8))
        batch = project(h, proj)
        rows = np.vstack([project(r[None], proj) for r in h])
        errs.append(np.abs(batch - rows).max())
    return errs


@prop("projector", 1e-12)
def matches_two_step_oracle(ctx):
    errs = []
    for _ in range(ctx.trials // 10):
        proj = ProjectorParams.init(8, 16, 12, seed=int(ctx.rng.integers(1 << 30)), std=0.5)
        proj.b1 = ctx.rng.normal(size=16)
        proj.b2 = ctx.rng.normal(size=12)
        h = ctx.rng.normal(size=(int(ctx.rng.integers(1, 6)), 8))
        hidden = oracles.matmul_loops(h, proj.w1.T) + proj.b1
        hidden = np.vectorize(oracles.gelu_ref)(hidden)
        ref = oracles.matmul_loops(hidden, proj.w2.T) + proj.b2
        errs.append(np.abs(project(h, proj) - ref).max())
    return errs


@prop("projector", 0)
def output_width_contract(ctx):
    errs = []
    for kind, shape in ((SourceKind.IMAGE2D, (1, 64, 64)), (SourceKind.VOLUME3D, (3, 64, 64)),
                        (SourceKind.VIDEO, (4, 64, 64))):
        planes = ctx.rng.uniform(size=shape)
        r = run_pipeline(PipelineConfig(kind=kind, desk=(1, 8, 2)), VisualInput(kind, planes))
        errs.append(0.0 if r["projector_output_shape"] == [r["tokens_after_prune"], 12] else np.inf)
    return errs


# fusion ---------------------------------------------------------------

@prop("fusion", 0)
def causality(ctx):
    dc = fu.DecoderConfig(max_len=24)
    p = _perturbed(fu.init_decoder(dc, 0), ctx.rng, 0.3)
    errs = []
    for _ in range(ctx.trials):
        T = int(ctx.rng.integers(2, 24))
        x = ctx.rng.normal(size=(T, dc.d_llm))
        t = int(ctx.rng.integers(0, T - 1))
        y = x.copy()
        y[t + 1:] += ctx.rng.normal(0, 10, y[t + 1:].shape)
        a, _ = fu.decoder_forward_embeddings(x, p, dc)
        b, _ = fu.decoder_forward_embeddings(y, p, dc)
        errs.append(0.0 if np.array_equal(a[:t + 1], b[:t + 1]) else np.inf)
    return errs


@prop("fusion", 0)
def tokenizer_round_trip(ctx):
    tok = fu.TOKENIZER
    errs = []
    for _ in range(ctx.trials):
        s = bytes(ctx.rng.integers(0, 256, int(ctx.rng.integers(0, 65))).astype(np.uint8))
        errs.append(0.0 if tok.decode(tok.encode(s)) == s else np.inf)
    return errs


@prop("fusion", 1e-10)
def decoder_matches_unrolled(ctx):
    dc = fu.DecoderConfig(max_len=8)
    errs = []
    for _ in range(5):
        p = _perturbed(fu.init_decoder(dc, int(ctx.rng.integers(1 << 30))), ctx.rng, 0.3)
        x = ctx.rng.normal(size=(int(ctx.rng.integers(1, 6)), dc.d_llm))
        fast, _ = fu.decoder_forward_embeddings(x, p, dc)
        errs.append(np.abs(fast - oracles.decoder_ref(x, p, dc.layers, dc.heads)).max())
    return errs


# gradients ------------------------------------------------------------

def _grad_errors(loss, params, analytic):
    num = oracles.numeric_grads(loss, params, list(analytic), GRAD_STEP)
    return {k: relative_error(analytic[k], num[k]) for k in analytic}


def encoder_gradient_errors(rng, n_tokens=12):
    cfg = enc.EncoderConfig.desk()
    p = _perturbed(enc.init_params(cfg, int(rng.integers(1 << 30))), rng, 0.3)
    x = rng.normal(size=(n_tokens, cfg.d_model))
    coords = rng.integers(0, 7, (n_tokens, 2))
    probe = rng.normal(size=(n_tokens, cfg.d_model))
    out, cache = enc.forward_tokens(x, coords, p, cfg)
    dx, grads = enc.backward_tokens(probe, p, cache)
    grads["tokens"] = dx
    p["tokens"] = x

    def loss(q):
        body = {k: v for k, v in q.items() if k != "tokens"}
        return float((enc.forward_tokens(q["tokens"], coords, body, cfg)[0] * probe).sum())

    return _grad_errors(loss, p, grads)


def projector_gradient_errors(rng, n_rows=10):
    proj = ProjectorParams.init(8, 16, 12, seed=int(rng.integers(1 << 30)), std=0.5)
    proj.b1 = rng.normal(size=16)
    h = rng.normal(size=(n_rows, 8))
    probe = rng.normal(size=(n_rows, 12))
    dh, grads = project_backward(probe, h, proj)
    grads = {f"proj.{k}": v for k, v in grads.items()}
    grads["h_v"] = dh
    params = {**proj.to_dict(), "h_v": h}

    def loss(q):
        return float((project(q["h_v"], ProjectorParams.from_dict(q)) * probe).sum())

    return _grad_errors(loss, params, grads)


def fused_gradient_errors(rng, n_tokens=12):
    ecfg = enc.EncoderConfig.desk()
    dc = fu.DecoderConfig(max_len=20)
    ep = _perturbed(enc.init_params(ecfg, int(rng.integers(1 << 30))), rng, 0.3)
    proj = ProjectorParams.init(8, 16, 12, seed=int(rng.integers(1 << 30)), std=0.5)
    dp = _perturbed(fu.init_decoder(dc, int(rng.integers(1 << 30))), rng, 0.2)
    x = rng.normal(size=(n_tokens, ecfg.d_model))
    coords = rng.integers(0, 7, (n_tokens, 2))
    ids = [fu.ByteTokenizer.BOS, ord("Q"), fu.ByteTokenizer.IMAGE, ord("?"), ord("A")]
    T = len(ids) - 1 + n_tokens
    targets = rng.integers(0, dc.vocab, T)
    _, grads = fu.fused_loss(x, coords, ids, targets, ep, ecfg, proj, dp, dc)
    params = {**ep, **proj.to_dict(), **{f"dec:{k}": v for k, v in dp.items()}, "tokens": x}

    def loss(q):
        e = {k: v for k, v in q.items() if not k.startswith(("proj.", "dec:")) and k != "tokens"}
        d = {k[4:]: v for k, v in q.items() if k.startswith("dec:")}
        return fu.fused_loss(q["tokens"], coords, ids, targets, e, ecfg, ProjectorParams.from_dict(q),
                             d, dc, with_grads=False)[0]

    return _grad_errors(loss, params, grads)


@prop("gradients", GRAD_TOL)
def encoder_gradients(ctx):
    return list(encoder_gradient_errors(ctx.rng).values())


@prop("gradients", GRAD_TOL)
def projector_gradients(ctx):
    return list(projector_gradient_errors(ctx.rng).values())


@prop("gradients", GRAD_TOL)
def fused_gradients(ctx):
    return list(fused_gradient_errors(ctx.rng).values())


# pipeline -------------------------------------------------------------

@prop("pipeline", 0)
def report_reconciles_and_is_deterministic(ctx):
    errs = []
    for _ in range(20):
        kind = [SourceKind.IMAGE2D, SourceKind.VOLUME3D, SourceKind.VIDEO][int(ctx.rng.integers(3))]
        P = 1 if kind is SourceKind.IMAGE2D else int(ctx.rng.integers(1, 5))
        planes = ctx.rng.uniform(size=(P, *ctx.rng.integers(1, 80, 2)))
        if ctx.rng.uniform() < 0.5 and P > 1:
            planes[1:] = planes[0]
        cfg = PipelineConfig(kind=kind, desk=(1, 8, 2), seed=int(ctx.rng.integers(100)))
        a = run_pipeline(cfg, VisualInput(kind, planes))  # run_pipeline checks reconciliation itself
        b = run_pipeline(cfg, VisualInput(kind, planes))
        a.pop("timings_ms"), b.pop("timings_ms")
        errs.append(0.0 if json.dumps(a, sort_keys=True) == json.dumps(b, sort_keys=True) else np.inf)
    return errs


# runner ---------------------------------------------------------------

def _suite_seed(seed: int, suite: str) -> np.random.Generator:
    return np.random.default_rng([seed, sorted(SUITES).index(suite)])


def run_suite(suite: str, seed: int = 0, trials: int = TRIALS, mutation: str | None = None):
    ctx = Context(_suite_seed(seed, suite), trials, mutation)
    results = []
    for name, tol, fn in SUITES[suite]:
        try:
            errs = np.asarray(fn(ctx), dtype=float).ravel()
            bad = ~(errs <= tol)
            results.append(PropertyResult(suite, name, errs.size, int(bad.sum()),
                                          float(errs.max()) if errs.size else 0.0, tol))
        except Exception as exc:  # a crash counts as a failed property
            results.append(PropertyResult(suite, f"{name} ({type(exc).__name__}: {exc})", 0, 1, math.inf, tol))
    return results


def run_all(seed: int = 0, suites=None, trials: int = TRIALS, mutation: str | None = None,
            workers: int | None = None) -> dict:
    from .cli import thread_cap

    names = list(suites) if suites else sorted(SUITES)
    unknown = [s for s in names if s not in SUITES]
    if unknown:
        raise KeyError(f"unknown suite(s): {unknown}; known: {sorted(SUITES)}")
    timings = {}

    def timed(s):
        t0 = time.perf_counter()
        r = run_suite(s, seed, trials, mutation)
        timings[s] = round(time.perf_counter() - t0, 3)
        return r

    with ThreadPoolExecutor(max_workers=workers or min(thread_cap(), len(names))) as pool:
        per_suite = dict(zip(names, pool.map(timed, names)))
    summary = {"seed": seed, "mutation": mutation, "suites": {}, "properties": 0, "passed": 0, "failed": 0}
    for s in names:
        rs = per_suite[s]
        summary["suites"][s] = {
            "properties": len(rs),
            "passed": sum(r.passed for r in rs),
            "failed": sum(not r.passed for r in rs),
            "checks": sum(r.trials for r in rs),
            "results": [asdict(r) | {"passed": r.passed} for r in rs],
        }
        summary["properties"] += len(rs)
        summary["passed"] += sum(r.passed for r in rs)
        summary["failed"] += sum(not r.passed for r in rs)
    summary["timings_s"] = timings
    return summary


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(prog="unipatch-verify", description="run the property suites")
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--suite", action="append", choices=sorted(SUITES))
    ap.add_argument("--trials", type=int, default=TRIALS)
    ap.add_argument("--mutate", choices=MUTATIONS, help="inject a known defect (harness sanity check)")
    args = ap.parse_args(argv)
    summary = run_all(args.seed, args.suite, args.trials, args.mutate)
    for s, info in summary["suites"].items():
        print(f"{s:10s} {info['passed']}/{info['properties']} properties, {info['checks']} checks",
              file=sys.stderr)
    print(json.dumps(summary, indent=2, default=float))
    return 0 if summary["failed"] == 0 else 1


if __name__ == "__main__":
    sys.exit(main())
