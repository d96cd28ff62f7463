import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from unipatch.errors import ConfigError, ShapeError
from unipatch.vistream import (
    SourceKind,
    VisualInput,
    decompose,
    embed_patches,
    patchify,
    sample_frames,
    tokenize,
)


def test_image_decomposes_to_one_plane():
    seq = decompose(VisualInput("image", np.zeros((32, 32))))
    assert len(seq.planes) == 1 and seq.plane_index == [0]


def test_volume_keeps_slice_order(rng):
    vol = rng.random((8, 16, 16))
    seq = decompose(VisualInput("volume", vol))
    assert seq.plane_index == list(range(8))
    for i, p in enumerate(seq.planes):
        np.testing.assert_array_equal(p, vol[i])


def test_video_stride_three_of_twelve():
    frames = np.arange(12)[:, None, None] * np.ones((12, 4, 4)) / 12
    seq = decompose(VisualInput("video", frames), stride=3)
    assert seq.plane_index == [0, 3, 6, 9]
    assert [p[0, 0] for p in seq.planes] == [0.0, 3 / 12, 6 / 12, 9 / 12]


def test_stride_ignored_for_volumes():
    seq = decompose(VisualInput("volume", np.zeros((6, 4, 4))), stride=4)
    assert len(seq.planes) == 6


def test_sample_frames_examples():
    frames = list(range(10))
    assert sample_frames(frames, 1) == frames
    assert sample_frames(frames, 4) == [0, 4, 8]
    assert sample_frames(["only"], 7) == ["only"]
    with pytest.raises(ConfigError):
        sample_frames(frames, 0)


def test_visual_input_validation():
    with pytest.raises(ShapeError):
        VisualInput("image", np.zeros((2, 4, 4)))
    with pytest.raises(ShapeError):
        VisualInput("video", np.zeros((0, 4, 4)))
    with pytest.raises(ValueError):
        VisualInput("volume", np.full((2, 4, 4), np.nan))
    with pytest.raises(ConfigError):
        SourceKind.parse("hologram")


def test_patchify_224_gives_196():
    grid = patchify(np.zeros((224, 224)))
    assert (grid.grid_h, grid.grid_w) == (14, 14)
    assert grid.grid_h * grid.grid_w == 196


def test_patchify_pads_20_to_32():
    plane = np.ones((20, 20))
    grid = patchify(plane)
    assert (grid.grid_h, grid.grid_w) == (2, 2)
    # bottom-right patch holds a 4x4 block of ones, rest zero padding
    br = grid.vectors[1, 1].reshape(16, 16)
    assert br[:4, :4].sum() == 16 and br.sum() == 16


def test_patchify_constant_plane():
    grid = patchify(np.full((32, 32), 0.25))
    flat = grid.vectors.reshape(4, -1)
    assert all(np.array_equal(flat[0], v) for v in flat)


def test_patchify_rejects_empty_plane_and_bad_patch():
    with pytest.raises(ShapeError):
        patchify(np.zeros((0, 5)))
    with pytest.raises(ConfigError):
        patchify(np.zeros((4, 4)), patch=0)


@settings(max_examples=150, deadline=None)
@given(st.integers(1, 100), st.integers(1, 100))
def test_patch_count_is_ceil_product(h, w):
    grid = patchify(np.zeros((h, w)))
    assert grid.grid_h * grid.grid_w == -(-h // 16) * -(-w // 16)


@settings(max_examples=100, deadline=None)
@given(st.integers(1, 50), st.integers(1, 50), st.integers(1, 9), st.integers(0, 2**31))
def test_patch_coordinates_round_trip(h, w, patch, seed):
    plane = np.random.default_rng(seed).random((h, w))
    grid = patchify(plane, patch)
    padded = np.zeros((grid.grid_h * patch, grid.grid_w * patch))
    padded[:h, :w] = plane
    for (m, n) in grid.coords:
        block = padded[m * patch:(m + 1) * patch, n * patch:(n + 1) * patch]
        np.testing.assert_array_equal(grid.vectors[m, n], block.ravel())


def test_decompose_then_patchify_commutes(rng):
    vol = rng.random((3, 40, 24))
    seq = decompose(VisualInput("volume", vol))
    for p, raw in zip(seq.planes, vol):
        np.testing.assert_array_equal(patchify(p).vectors, patchify(raw).vectors)


def test_embed_zero_weights_gives_bias():
    grid = patchify(np.random.default_rng(0).random((32, 48)))
    c = np.array([1.0, -2.0, 0.5])
    plane = embed_patches(grid, np.zeros((3, 256)), c)
    assert np.all(plane.tokens == c)


def test_embed_identity_returns_patch_vectors():
    grid = patchify(np.random.default_rng(1).random((8, 8)), patch=2)
    plane = embed_patches(grid, np.eye(4), np.zeros(4))
    np.testing.assert_array_equal(plane.tokens, grid.vectors.reshape(-1, 4))
    np.testing.assert_array_equal(plane.coords, grid.coords)


def test_embed_matches_per_patch_loop(rng):
    grid = patchify(rng.random((40, 40)))
    w, b = rng.normal(size=(8, 256)), rng.normal(size=8)
    plane = embed_patches(grid, w, b)
    for t, (m, n) in enumerate(plane.coords):
        v = grid.vectors[m, n]
        ref = [sum(w[i, j] * v[j] for j in range(256)) + b[i] for i in range(8)]
        assert np.abs(plane.tokens[t] - ref).max() < 1e-12


def test_embed_dimension_mismatch():
    grid = patchify(np.zeros((16, 16)))
    with pytest.raises(ShapeError):
        embed_patches(grid, np.zeros((4, 255)), np.zeros(4))
    with pytest.raises(ShapeError):
        embed_patches(grid, np.zeros((4, 256)), np.zeros(5))


def test_tokenize_keeps_plane_index():
    seq = tokenize(decompose(VisualInput("video", np.zeros((5, 16, 16))), stride=2), np.zeros((2, 256)), np.zeros(2))
    assert seq.plane_index == [0, 2, 4] and seq.token_count == 3
