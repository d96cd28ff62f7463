import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from unipatch.errors import ShapeError
from unipatch.numkit import (
    central_diff_grad,
    downsample2x,
    gelu,
    gelu_grad,
    layer_norm,
    matmul,
    relative_error,
    softmax_rows,
)
from unipatch.oracles import gelu_ref, matmul_loops

finite = st.floats(-10, 10, allow_nan=False)


def test_matmul_identity(rng):
    m = rng.normal(size=(3, 4))
    np.testing.assert_array_equal(matmul(np.eye(3), m), m)


def test_matmul_permutation_columns():
    out = matmul([[1, 2], [3, 4]], [[0, 1], [1, 0]])
    np.testing.assert_array_equal(out, [[2, 1], [4, 3]])


def test_matmul_matches_triple_loop(rng):
    a, b = rng.normal(size=(5, 7)), rng.normal(size=(7, 3))
    assert np.abs(matmul(a, b) - matmul_loops(a, b)).max() < 1e-12


def test_matmul_mismatch_names_both_shapes():
    with pytest.raises(ShapeError) as err:
        matmul(np.ones((2, 3)), np.ones((4, 5)))
    assert "(2, 3)" in str(err.value) and "(4, 5)" in str(err.value)
    assert err.value.shapes == ((2, 3), (4, 5))


@settings(max_examples=200, deadline=None)
@given(st.integers(1, 5), st.integers(1, 5), st.integers(1, 5), st.integers(1, 5), st.integers(0, 2**32 - 1))
def test_matmul_associative(n, k, l, m, seed):
    g = np.random.default_rng(seed)
    a, b, c = g.normal(size=(n, k)), g.normal(size=(k, l)), g.normal(size=(l, m))
    assert np.abs(matmul(matmul(a, b), c) - matmul(a, matmul(b, c))).max() < 1e-10


def test_softmax_uniform_row():
    np.testing.assert_allclose(softmax_rows([[0.0, 0.0, 0.0]]), [[1 / 3] * 3], atol=1e-15)


def test_softmax_large_logits_do_not_overflow():
    out = softmax_rows([[1000.0, 0.0]])
    assert np.all(np.isfinite(out))
    assert out[0, 0] == pytest.approx(1.0) and out[0, 1] < 1e-300


def test_softmax_closed_form():
    e = math.e
    np.testing.assert_allclose(softmax_rows([[1.0, 2.0]]), [[1 / (1 + e), e / (1 + e)]], rtol=0, atol=1e-15)


def test_softmax_masked_entries_are_zero():
    out = softmax_rows([[0.0, -np.inf, 1.0]])
    assert out[0, 1] == 0.0


@settings(max_examples=200, deadline=None)
@given(arrays(np.float64, st.tuples(st.integers(1, 6), st.integers(1, 9)), elements=st.floats(-1e3, 1e3)))
def test_softmax_rows_sum_to_one(m):
    s = softmax_rows(m)
    assert np.all(s >= 0)
    assert np.abs(s.sum(axis=1) - 1).max() < 1e-12


def test_gelu_fixed_points():
    assert gelu(0.0) == 0.0
    assert abs(gelu(10.0) - 10.0) < 1e-9


def test_gelu_one_matches_erf_series():
    # 0.5 * (1 + erf(1/sqrt 2)) from the Maclaurin series oracle
    expected = 0.8413447460685429
    assert abs(gelu_ref(1.0) - expected) < 1e-15
    assert abs(gelu(1.0) - expected) < 1e-10


@given(finite)
def test_gelu_odd_part(x):
    assert abs(gelu(x) - gelu(-x) - x) < 1e-10


def test_gelu_monotone_on_positive_axis():
    x = np.linspace(-0.75, 10, 2001)
    assert np.all(np.diff(gelu(x)) > 0)


def test_gelu_grad_matches_central_difference():
    x = np.linspace(-5, 5, 41)
    num = np.array([central_diff_grad(lambda v: gelu(v[0]), [xi], 1e-6)[0] for xi in x])
    assert np.abs(gelu_grad(x) - num).max() < 1e-8


def test_layer_norm_constant_vector_is_zero():
    np.testing.assert_array_equal(layer_norm(np.full(5, 3.0), np.ones(5), np.zeros(5)), np.zeros(5))


def test_layer_norm_two_point_closed_form():
    out = layer_norm([1.0, -1.0], [1.0, 1.0], [0.0, 0.0], eps=1e-15)
    np.testing.assert_allclose(out, [1.0, -1.0], atol=1e-12)


def test_layer_norm_zero_gain_returns_bias(rng):
    b = rng.normal(size=6)
    np.testing.assert_array_equal(layer_norm(rng.normal(size=6), np.zeros(6), b), b)


@settings(max_examples=200, deadline=None)
@given(arrays(np.float64, st.integers(2, 32), elements=st.floats(-100, 100)))
def test_layer_norm_moments(v):
    if np.ptp(v) < 1e-3:
        return
    y = layer_norm(v, np.ones(v.size), np.zeros(v.size), eps=1e-14)
    assert abs(y.mean()) < 1e-10
    assert abs(y.var() - 1) < 1e-10 * max(1.0, 1e-14 / v.var() * 1e10)


def test_layer_norm_length_mismatch():
    with pytest.raises(ShapeError):
        layer_norm(np.ones(3), np.ones(2), np.zeros(3))


def test_central_diff_quadratic():
    g = central_diff_grad(lambda p: float((p ** 2).sum()), [1.0, 2.0], 1e-5)
    np.testing.assert_allclose(g, [2.0, 4.0], atol=1e-8)


def test_central_diff_product():
    g = central_diff_grad(lambda p: p[0] * p[1], [3.0, 5.0], 1e-5)
    np.testing.assert_allclose(g, [5.0, 3.0], atol=1e-8)


def test_central_diff_rejects_non_finite():
    with pytest.raises(FloatingPointError):
        central_diff_grad(lambda p: 1.0 / p[0] if p[0] > 0 else np.inf, [0.0], 1e-5)
    with pytest.raises(ValueError):
        central_diff_grad(lambda p: 0.0, [0.0], 0.0)


def test_central_diff_leaves_input_untouched():
    p = np.array([1.0, 2.0])
    central_diff_grad(lambda q: float(q.sum()), p)
    np.testing.assert_array_equal(p, [1.0, 2.0])


def test_downsample2x_block_mean():
    g = np.arange(16, dtype=float).reshape(4, 4, 1)
    out = downsample2x(g)
    np.testing.assert_array_equal(out[..., 0], [[2.5, 4.5], [10.5, 12.5]])


def test_downsample2x_odd_edges_average_members():
    g = np.arange(9, dtype=float).reshape(3, 3, 1)
    out = downsample2x(g)[..., 0]
    np.testing.assert_array_equal(out, [[(0 + 1 + 3 + 4) / 4, (2 + 5) / 2], [(6 + 7) / 2, 8]])


def test_relative_error_conventions():
    assert relative_error([0.0], [0.0]) == 0.0
    assert relative_error([1.0, 0.0], [1.0, 0.0]) == 0.0
    assert relative_error([2.0], [1.0]) == pytest.approx(0.5)
