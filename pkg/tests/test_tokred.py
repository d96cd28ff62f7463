import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from unipatch.errors import ConfigError, InvariantError, ShapeError
from unipatch.oracles import bilinear_half, prune_masks_ref
from unipatch.tokred import ReductionReport, merge_2x2, prune_interplane, reduce_pipeline
from unipatch.vistream import PlaneSequence, TokenPlane, VisualInput, decompose, tokenize


def seq_of(arrays, kind="video"):
    planes = [TokenPlane(a.shape[0], a.shape[1], a.reshape(-1, a.shape[2])) for a in arrays]
    return PlaneSequence(kind, planes, list(range(len(planes))))


def test_merge_identical_tokens():
    t = np.array([0.3, -1.0, 2.0])
    out = merge_2x2(TokenPlane(4, 6, np.tile(t, (24, 1))))
    assert (out.grid_h, out.grid_w) == (2, 3)
    assert np.all(out.tokens == t)


def test_merge_block_mean_is_three():
    out = merge_2x2(TokenPlane(2, 2, np.array([[0.0], [2.0], [4.0], [6.0]])))
    assert out.tokens.shape == (1, 1) and out.tokens[0, 0] == 3.0


def test_merge_14_to_49():
    out = merge_2x2(TokenPlane(14, 14, np.zeros((196, 4))))
    assert (out.grid_h, out.grid_w, out.tokens.shape[0]) == (7, 7, 49)
    np.testing.assert_array_equal(out.coords[:3], [[0, 0], [0, 1], [0, 2]])


def test_merge_odd_grid_ceil():
    out = merge_2x2(TokenPlane(3, 5, np.zeros((15, 2))))
    assert (out.grid_h, out.grid_w) == (2, 3)


def test_merge_equals_bilinear_at_block_centres(rng):
    g = rng.normal(size=(6, 8, 3))
    out = merge_2x2(TokenPlane(6, 8, g.reshape(-1, 3))).as_grid()
    assert np.abs(out - bilinear_half(g)).max() < 1e-14


@settings(max_examples=200, deadline=None)
@given(st.integers(1, 7), st.integers(1, 7), st.integers(1, 5), st.floats(-5, 5), st.floats(-5, 5),
       st.integers(0, 2**31))
def test_merge_affine_equivariance(gh, gw, d, a, b, seed):
    x = np.random.default_rng(seed).normal(size=(gh * gw, d))
    lhs = merge_2x2(TokenPlane(gh, gw, a * x + b)).tokens
    rhs = a * merge_2x2(TokenPlane(gh, gw, x)).tokens + b
    assert np.abs(lhs - rhs).max() < 1e-12


def test_identical_planes_prune_all_but_first():
    x = np.random.default_rng(0).normal(size=(3, 3, 4))
    pruned, rep = prune_interplane(seq_of([x] * 5))
    assert rep.pruned == 36 and rep.total_after == 9
    assert rep.rate == pytest.approx(4 / 5)
    assert pruned.masks[0].all()


def test_far_planes_prune_nothing():
    planes = [np.full((2, 3, 2), float(i)) for i in range(4)]
    _, rep = prune_interplane(seq_of(planes), tau=0.5)
    assert rep.pruned == 0 and rep.rate == 0.0


def test_crafted_three_plane_sequence():
    # per-site distances: plane1 vs 0 = [.05,.2,.05,.2], plane2 vs 1 = [.2,.05,.05,.2]
    p0 = np.zeros((2, 2, 2))
    step1 = np.array([0.05, 0.2, 0.05, 0.2]).reshape(2, 2, 1)
    step2 = np.array([0.2, 0.05, 0.05, 0.2]).reshape(2, 2, 1)
    p1 = p0 + step1
    p2 = p1 + step2
    pruned, rep = prune_interplane(seq_of([p0, p1, p2]), tau=0.1)
    expected = [[True] * 4, [False, True, False, True], [True, False, False, True]]
    assert [m.tolist() for m in pruned.masks] == expected
    ref = prune_masks_ref([p.reshape(4, 2) for p in (p0, p1, p2)], 0.1)
    assert [m.tolist() for m in pruned.masks] == ref
    assert [(c.kept, c.pruned) for c in rep.per_plane] == [(4, 0), (2, 2), (2, 2)]


def test_reference_is_previous_unpruned_token():
    # drift of 0.06 per plane: each step is sub-tau even though plane 2 is 0.12 from plane 0
    planes = [np.full((1, 1, 1), 0.06 * i) for i in range(3)]
    pruned, _ = prune_interplane(seq_of(planes), tau=0.1)
    assert [bool(m[0]) for m in pruned.masks] == [True, False, False]


@settings(max_examples=300, deadline=None)
@given(st.integers(1, 4), st.integers(1, 3), st.integers(1, 3), st.integers(1, 8), st.integers(0, 2**31))
def test_masks_match_brute_force_and_are_monotone(P, gh, gw, d, seed):
    g = np.random.default_rng(seed)
    base = g.normal(size=(gh, gw, d))
    planes = [base]
    for _ in range(P - 1):
        step = g.normal(size=(gh, gw, d)) * g.choice([0.0, 0.02, 0.2, 1.0], size=(gh, gw, 1))
        planes.append(planes[-1] + step)
    seq = seq_of(planes)
    taus = sorted(g.uniform(0, 0.5, 3).tolist() + [0.0])
    prev = None
    for tau in taus:
        pruned, rep = prune_interplane(seq, tau)
        got = [m.tolist() for m in pruned.masks]
        assert got == prune_masks_ref([p.reshape(-1, d) for p in planes], tau)
        if prev is not None:
            assert all((not a) or b for pm, m in zip(got, prev) for a, b in zip(pm, m))
        prev = got
        assert rep.total_before - rep.pruned == rep.total_after


def test_tau_zero_prunes_only_duplicates():
    a = np.zeros((2, 2, 3))
    b = a.copy()
    b[0, 0] += 1e-300
    pruned, _ = prune_interplane(seq_of([a, a, b]), tau=0.0)
    assert pruned.masks[1].tolist() == [False] * 4
    assert pruned.masks[2].tolist() == [True, False, False, False]


def test_infinite_tau_keeps_only_first_plane():
    x = np.random.default_rng(3).normal(size=(4, 2, 2, 3))
    pruned, rep = prune_interplane(seq_of(list(x)), tau=np.inf)
    assert rep.total_after == 4


def test_prune_errors():
    with pytest.raises(ConfigError):
        prune_interplane(seq_of([np.zeros((1, 1, 1))]), tau=-0.1)
    with pytest.raises(ConfigError):
        prune_interplane(seq_of([np.zeros((1, 1, 1))]), tau=float("nan"))
    with pytest.raises(ShapeError):
        prune_interplane(seq_of([np.zeros((2, 2, 1)), np.zeros((2, 3, 1))]))


def test_kept_tokens_carry_provenance():
    p0 = np.zeros((2, 2, 1))
    p1 = p0.copy()
    p1[1, 0] = 5.0
    pruned, _ = prune_interplane(seq_of([p0, p1]))
    rows, prov = pruned.kept_tokens()
    assert rows.shape == (5, 1)
    assert prov.tolist()[-1] == [1, 1, 0]


def _embedded(kind, planes):
    g = np.random.default_rng(7)
    px = decompose(VisualInput(kind, planes))
    return tokenize(px, g.normal(0, 0.02, (8, 256)), np.zeros(8))


def test_image_reduction_is_passthrough():
    seq = _embedded("image", np.random.default_rng(0).random((224, 224)))
    pruned, rep = reduce_pipeline(seq)
    assert rep.total_after == 196 and rep.rate == 0.0 and not rep.merged


def test_identical_video_frames():
    frame = np.random.default_rng(0).random((224, 224))
    seq = _embedded("video", np.stack([frame] * 8))
    _, rep = reduce_pipeline(seq, tau=0.1)
    assert rep.patch_tokens == 8 * 196
    assert rep.total_before == 392 and rep.total_after == 49
    assert rep.rate == pytest.approx(7 / 8)


def test_merge_override():
    seq = _embedded("volume", np.zeros((2, 32, 32)))
    _, rep = reduce_pipeline(seq, merge=False)
    assert rep.total_before == 8 and rep.merged_away == 0


def test_report_check_detects_inconsistency():
    rep = ReductionReport(10, 10, 9, 0, 2, 0.2, 0.1, False)
    with pytest.raises(InvariantError):
        rep.check()
