"""Plane decomposition, patchification and patch embedding.

Every visual input, whether a single image, a volume or a video, becomes an
ordered list of 2-D grayscale planes; each plane is cut into square patches
and linearly embedded into a token grid carrying (row, col) coordinates.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, ShapeError
from .numkit import DTYPE

PATCH = 16


class SourceKind(str, enum.Enum):
    IMAGE2D = "image"
    VOLUME3D = "volume"
    VIDEO = "video"

    @classmethod
    def parse(cls, value) -> "SourceKind":
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).lower())
        except ValueError:
            raise ConfigError(f"unknown input kind {value!r}") from None


@dataclass
class VisualInput:
    kind: SourceKind
    planes: np.ndarray  # (P, H, W), values in [0, 1]

    def __post_init__(self):
        self.kind = SourceKind.parse(self.kind)
        self.planes = np.asarray(self.planes, dtype=DTYPE)
        if self.planes.ndim == 2:
            self.planes = self.planes[None]
        if self.planes.ndim != 3:
            raise ShapeError("planes must be (P, H, W)", self.planes.shape)
        if self.planes.shape[0] == 0 or self.planes.shape[1] == 0 or self.planes.shape[2] == 0:
            raise ShapeError("empty visual input", self.planes.shape)
        if self.kind is SourceKind.IMAGE2D and self.planes.shape[0] != 1:
            raise ShapeError("an image has exactly one plane", self.planes.shape)
        if not np.all(np.isfinite(self.planes)):
            raise ValueError("pixel values must be finite")

    @property
    def height(self) -> int:
        return self.planes.shape[1]

    @property
    def width(self) -> int:
        return self.planes.shape[2]


@dataclass
class PixelSequence:
    """Raw pixel planes of one input, in source order."""

    source_kind: SourceKind
    planes: list[np.ndarray]
    plane_index: list[int]


@dataclass
class PatchGrid:
    vectors: np.ndarray  # (grid_h, grid_w, patch * patch), row-major inside each patch
    patch: int

    @property
    def grid_h(self) -> int:
        return self.vectors.shape[0]

    @property
    def grid_w(self) -> int:
        return self.vectors.shape[1]

    @property
    def coords(self) -> np.ndarray:
        return grid_coords(self.grid_h, self.grid_w)


@dataclass
class TokenPlane:
    """Token grid of one plane; ``tokens`` rows are in row-major grid order."""

    grid_h: int
    grid_w: int
    tokens: np.ndarray  # (grid_h * grid_w, d)
    coords: np.ndarray = field(default=None)  # (grid_h * grid_w, 2) as (m, n)

    def __post_init__(self):
        self.tokens = np.asarray(self.tokens, dtype=DTYPE)
        if self.coords is None:
            self.coords = grid_coords(self.grid_h, self.grid_w)
        n = self.grid_h * self.grid_w
        if self.tokens.ndim != 2 or self.tokens.shape[0] != n:
            raise ShapeError(
                f"token count must equal grid_h*grid_w={n}", self.tokens.shape
            )
        if self.coords.shape != (n, 2):
            raise ShapeError("one (m, n) pair per token required", self.coords.shape)

    @property
    def d(self) -> int:
        return self.tokens.shape[1]

    def as_grid(self) -> np.ndarray:
        return self.tokens.reshape(self.grid_h, self.grid_w, -1)


@dataclass
class PlaneSequence:
    source_kind: SourceKind
    planes: list[TokenPlane]
    plane_index: list[int]

    def __post_init__(self):
        if not self.planes:
            raise ShapeError("plane sequence must be non-empty", (0,))
        if len(self.plane_index) != len(self.planes):
            raise ShapeError("plane_index length differs", (len(self.plane_index),), (len(self.planes),))

    @property
    def token_count(self) -> int:
        return sum(p.tokens.shape[0] for p in self.planes)


def grid_coords(grid_h: int, grid_w: int) -> np.ndarray:
    m, n = np.meshgrid(np.arange(grid_h), np.arange(grid_w), indexing="ij")
    return np.stack([m.ravel(), n.ravel()], axis=1).astype(np.int64)


def sample_frames(frames, stride: int):
    """Keep frames 0, stride, 2*stride, ... in order."""
    if int(stride) != stride or stride < 1:
        raise ConfigError(f"frame stride must be a positive integer, got {stride!r}")
    return frames[::stride]


def decompose(inp: VisualInput, stride: int = 1) -> PixelSequence:
    """Split an input into its planes; videos are first subsampled by ``stride``."""
    idx = list(range(inp.planes.shape[0]))
    if inp.kind is SourceKind.VIDEO:
        idx = sample_frames(idx, stride)
    if not idx:
        raise ShapeError("empty visual input", inp.planes.shape)
    return PixelSequence(inp.kind, [inp.planes[i] for i in idx], idx)


def patchify(plane, patch: int = PATCH) -> PatchGrid:
    """Cut a plane into non-overlapping ``patch`` x ``patch`` blocks.

    The plane is zero-padded on the bottom/right up to a multiple of ``patch``.
    """
    if int(patch) != patch or patch < 1:
        raise ConfigError(f"patch size must be a positive integer, got {patch!r}")
    plane = np.asarray(plane, dtype=DTYPE)
    if plane.ndim != 2 or plane.size == 0:
        raise ShapeError("patchify expects a non-empty 2-D plane", plane.shape)
    h, w = plane.shape
    gh, gw = -(-h // patch), -(-w // patch)
    padded = np.zeros((gh * patch, gw * patch), dtype=DTYPE)
    padded[:h, :w] = plane
    blocks = padded.reshape(gh, patch, gw, patch).transpose(0, 2, 1, 3)
    return PatchGrid(blocks.reshape(gh, gw, patch * patch).copy(), patch)


def embed_patches(grid: PatchGrid, w_embed, b_embed) -> TokenPlane:
    """token = W_embed @ patch_vector + b_embed for every patch."""
    w_embed = np.asarray(w_embed, dtype=DTYPE)
    b_embed = np.asarray(b_embed, dtype=DTYPE)
    p2 = grid.vectors.shape[-1]
    if w_embed.ndim != 2 or w_embed.shape[1] != p2:
        raise ShapeError("W_embed columns must equal patch^2", w_embed.shape, (p2,))
    if b_embed.shape != (w_embed.shape[0],):
        raise ShapeError("b_embed length must equal W_embed rows", b_embed.shape, w_embed.shape)
    flat = grid.vectors.reshape(-1, p2)
    return TokenPlane(grid.grid_h, grid.grid_w, flat @ w_embed.T + b_embed)


def tokenize(pixels: PixelSequence, w_embed, b_embed, patch: int = PATCH) -> PlaneSequence:
    """Patchify and embed every plane of a decomposed input."""
    planes = [embed_patches(patchify(p, patch), w_embed, b_embed) for p in pixels.planes]
    return PlaneSequence(pixels.source_kind, planes, list(pixels.plane_index))
