"""Calibrated synthetic volumes/videos for pruning-rate checks.

Planes are tiled into sites of ``2 * patch`` pixels, one site per merged
token. Each site sits at a low or a high grey level plus small uniform noise
of amplitude ``tau / 10``. Between consecutive planes exactly
``floor(redundancy * sites)`` sites, chosen at random, keep their level; the
rest flip to the other level, a step of about ``10 * tau``. Kept sites stay
far below the pruning threshold after embedding and flipped sites far
above it, so the expected pruning rate is
``floor(redundancy * sites) / sites * (P - 1) / P``.
"""
from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .errors import ConfigError
from .pgmio import write_pgm, write_volume
from .tokred import DEFAULT_TAU
from .vistream import PATCH, SourceKind


def site_grid(height: int, width: int, patch: int = PATCH) -> tuple[int, int]:
    block = 2 * patch
    return -(-height // block), -(-width // block)


def expected_rate(redundancy: float, planes: int, height: int, width: int, patch: int = PATCH) -> float:
    sh, sw = site_grid(height, width, patch)
    sites = sh * sw
    return int(np.floor(redundancy * sites)) / sites * (planes - 1) / planes


def synthetic_planes(redundancy: float, planes: int, height: int, width: int, seed: int = 0,
                     tau: float = DEFAULT_TAU, patch: int = PATCH) -> np.ndarray:
    """(planes, height, width) pixel array in [0, 1]."""
    if not 0.0 <= redundancy <= 1.0:
        raise ConfigError(f"redundancy must lie in [0, 1], got {redundancy}")
    if planes < 1 or height < 1 or width < 1:
        raise ConfigError(f"impossible configuration: {planes} planes of {height}x{width}")
    if not 0.0 < tau <= 0.5:
        raise ConfigError(f"tau must lie in (0, 0.5] for calibrated data, got {tau}")
    sh, sw = site_grid(height, width, patch)
    sites = sh * sw
    if sites == 0:
        raise ConfigError("impossible configuration: zero sites")
    noise = tau / 10.0
    step = min(10.0 * tau, 1.0 - 2.0 * noise)
    lo, hi = 0.5 - step / 2.0, 0.5 + step / 2.0
    n_same = int(np.floor(redundancy * sites))

    rng = np.random.default_rng(seed)
    level = rng.integers(0, 2, sites).astype(bool)
    out = np.empty((planes, height, width))
    block = 2 * patch
    for p in range(planes):
        if p:
            flip = np.ones(sites, dtype=bool)
            flip[rng.permutation(sites)[:n_same]] = False
            level = level ^ flip
        site_vals = np.where(level, hi, lo).reshape(sh, sw)
        base = np.kron(site_vals, np.ones((block, block)))[:height, :width]
        out[p] = base + rng.uniform(-noise, noise, (height, width))
    return np.clip(out, 0.0, 1.0)


def gen_synthetic(kind, redundancy: float, planes: int, dims, seed: int, out, tau: float = DEFAULT_TAU,
                  patch: int = PATCH) -> Path:
    """Write a calibrated corpus and return the path to pass as ``--input``.

    video -> directory of ``frame_XXXX.pgm``; volume -> ``<out>.raw`` plus
    its JSON sidecar. A metadata file records the generation parameters.
    """
    kind = SourceKind.parse(kind)
    if kind is SourceKind.IMAGE2D:
        raise ConfigError("synthetic corpora are volumes or videos")
    height, width = (int(x) for x in dims)
    data = synthetic_planes(redundancy, planes, height, width, seed, tau, patch)
    out = Path(out)
    meta = {
        "kind": kind.value, "redundancy": redundancy, "planes": planes, "dims": [height, width],
        "seed": seed, "tau": tau, "patch": patch,
        "expected_rate": expected_rate(redundancy, planes, height, width, patch),
    }
    if kind is SourceKind.VIDEO:
        out.mkdir(parents=True, exist_ok=True)
        for i, frame in enumerate(data):
            write_pgm(out / f"frame_{i:04d}.pgm", frame)
        (out / "synthetic.meta.json").write_text(json.dumps(meta, indent=2))
        return out
    raw = out if out.suffix == ".raw" else out.with_suffix(".raw")
    raw.parent.mkdir(parents=True, exist_ok=True)
    write_volume(raw, data)
    raw.with_suffix(".meta.json").write_text(json.dumps(meta, indent=2))
    return raw
