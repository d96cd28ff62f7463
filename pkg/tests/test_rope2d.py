import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from unipatch.errors import ConfigError, ShapeError
from unipatch.oracles import rope_ref
from unipatch.rope2d import PositionedVector, RopeTable, apply_rope2d, rope_dot, rope_frequencies, rotate

pos = st.integers(-300, 300)


def test_frequencies_d4():
    np.testing.assert_allclose(rope_frequencies(4), [0.01], rtol=1e-15)


def test_frequencies_d8():
    np.testing.assert_allclose(rope_frequencies(8), [0.1, 0.01], rtol=1e-15)


def test_frequencies_d64_strictly_decreasing():
    f = rope_frequencies(64)
    assert f.size == 16 and np.all(np.diff(f) < 0)


@pytest.mark.parametrize("d", [0, 2, 6, 10])
def test_frequencies_reject_bad_width(d):
    with pytest.raises(ConfigError):
        rope_frequencies(d)


def test_table_unit_circle():
    t = RopeTable(16, max_position=64)
    c, s = t.cos_sin(np.arange(64))
    assert np.abs(c ** 2 + s ** 2 - 1).max() < 1e-12


def test_origin_is_identity(rng):
    t = RopeTable(8)
    v = rng.normal(size=8)
    assert np.array_equal(apply_rope2d(PositionedVector(v, 0, 0), t), v)


def test_worked_d4_case():
    out = apply_rope2d(PositionedVector(np.array([1.0, 0.0, 1.0, 0.0]), 1, 2), RopeTable(4))
    expected = [math.cos(0.01), math.sin(0.01), math.cos(0.02), math.sin(0.02)]
    assert np.abs(out - expected).max() < 1e-15


def test_same_position_dot_is_squared_norm(rng):
    t = RopeTable(8)
    q = rng.normal(size=8)
    assert rope_dot(PositionedVector(q, 5, 9), PositionedVector(q, 5, 9), t) == pytest.approx(q @ q, abs=1e-12)


def test_d4_dot_matches_trig_expansion():
    # <R(a)q, R(b)k> = cos(b-a)(q1k1+q2k2) + sin(b-a)(q2k1-q1k2), per half
    q = np.array([0.3, -1.2, 2.0, 0.7])
    k = np.array([1.1, 0.4, -0.5, 1.5])
    m, n, m2, n2 = 3, -2, 7, 5
    th = 0.01
    a, b = (m2 - m) * th, (n2 - n) * th
    expected = (
        math.cos(a) * (q[0] * k[0] + q[1] * k[1]) + math.sin(a) * (q[1] * k[0] - q[0] * k[1])
        + math.cos(b) * (q[2] * k[2] + q[3] * k[3]) + math.sin(b) * (q[3] * k[2] - q[2] * k[3])
    )
    got = rope_dot(PositionedVector(q, m, n), PositionedVector(k, m2, n2), RopeTable(4))
    assert abs(got - expected) < 1e-14


@settings(max_examples=300, deadline=None)
@given(st.sampled_from([4, 8, 64]), pos, pos, pos, pos, pos, pos, st.integers(0, 2**31))
def test_relative_position_invariance(d, m, n, m2, n2, s, t, seed):
    g = np.random.default_rng(seed)
    table = RopeTable(d)
    q, k = g.normal(size=d), g.normal(size=d)
    base = rope_dot(PositionedVector(q, m, n), PositionedVector(k, m2, n2), table)
    shifted = rope_dot(PositionedVector(q, m + s, n + t), PositionedVector(k, m2 + s, n2 + t), table)
    assert abs(base - shifted) < 1e-9


@settings(max_examples=300, deadline=None)
@given(st.sampled_from([4, 8, 16, 64]), pos, pos, st.integers(0, 2**31))
def test_norm_preserved_and_matches_reference(d, m, n, seed):
    v = np.random.default_rng(seed).normal(size=d)
    out = apply_rope2d(PositionedVector(v, m, n), RopeTable(d))
    assert abs(np.linalg.norm(out) - np.linalg.norm(v)) < 1e-12
    assert np.abs(out - rope_ref(v, m, n)).max() < 1e-12


@settings(max_examples=300, deadline=None)
@given(st.sampled_from([4, 8, 64]), pos, pos, pos, pos, st.integers(0, 2**31))
def test_composition(d, m, n, m2, n2, seed):
    t = RopeTable(d)
    v = np.random.default_rng(seed).normal(size=d)
    twice = apply_rope2d(PositionedVector(apply_rope2d(PositionedVector(v, m, n), t), m2, n2), t)
    once = apply_rope2d(PositionedVector(v, m + m2, n + n2), t)
    assert np.abs(twice - once).max() < 1e-10


def test_inverse_undoes_rotation(rng):
    t = RopeTable(8)
    x = rng.normal(size=(3, 5, 8))
    m, n = rng.integers(0, 50, 5), rng.integers(0, 50, 5)
    back = rotate(rotate(x, m, n, t), m, n, t, inverse=True)
    assert np.abs(back - x).max() < 1e-14


def test_positions_beyond_cache_computed_on_the_fly(rng):
    small, big = RopeTable(8, max_position=4), RopeTable(8, max_position=4096)
    v = rng.normal(size=8)
    a = apply_rope2d(PositionedVector(v, 3000, 17), small)
    b = apply_rope2d(PositionedVector(v, 3000, 17), big)
    assert np.abs(a - b).max() < 1e-12


def test_width_mismatch():
    with pytest.raises(ShapeError):
        apply_rope2d(PositionedVector(np.zeros(4), 0, 0), RopeTable(8))
    with pytest.raises(ShapeError):
        rope_dot(PositionedVector(np.zeros(8), 0, 0), PositionedVector(np.zeros(4), 0, 0), RopeTable(8))
