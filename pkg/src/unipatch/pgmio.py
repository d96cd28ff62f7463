"""Readers and writers for the on-disk input formats.

image  : binary portable graymap (P5), 8-bit
volume : raw little-endian float32, slice-major, with a JSON sidecar
         ``{"dims": [D, H, W]}`` next to it (``vol.raw`` -> ``vol.json``)
video  : directory of P5 frames, taken in lexicographic filename order
"""
from __future__ import annotations

import json
import re
from pathlib import Path

import numpy as np

from .errors import InputError
from .vistream import SourceKind, VisualInput


class MissingInputError(InputError):
    pass


class MalformedHeaderError(InputError):
    pass


class DimsMismatchError(InputError):
    pass


_PGM_HEADER = re.compile(rb"P5(?:\s+|#[^\n]*\n)+?(\d+)(?:\s+|#[^\n]*\n)+?(\d+)(?:\s+|#[^\n]*\n)+?(\d+)\s")


def read_pgm(path) -> np.ndarray:
    path = Path(path)
    if not path.is_file():
        raise MissingInputError(f"no such file: {path}")
    data = path.read_bytes()
    match = _PGM_HEADER.match(data)
    if match is None:
        raise MalformedHeaderError(f"{path}: not a binary P5 graymap header")
    width, height, maxval = (int(g) for g in match.groups())
    if width < 1 or height < 1 or not 1 <= maxval <= 255:
        raise MalformedHeaderError(f"{path}: unsupported size {width}x{height} / maxval {maxval}")
    payload = data[match.end():]
    if len(payload) != width * height:
        raise DimsMismatchError(
            f"{path}: header says {width}x{height} = {width * height} bytes, payload has {len(payload)}"
        )
    return np.frombuffer(payload, dtype=np.uint8).reshape(height, width).astype(np.float64) / maxval


def write_pgm(path, plane) -> Path:
    path = Path(path)
    pixels = np.clip(np.rint(np.asarray(plane) * 255.0), 0, 255).astype(np.uint8)
    h, w = pixels.shape
    path.write_bytes(b"P5\n%d %d\n255\n" % (w, h) + pixels.tobytes())
    return path


def sidecar_path(raw_path) -> Path:
    raw_path = Path(raw_path)
    for cand in (raw_path.with_suffix(".json"), raw_path.with_name(raw_path.name + ".json")):
        if cand.is_file():
            return cand
    raise MissingInputError(f"no JSON sidecar next to {raw_path}")


def read_volume(path) -> np.ndarray:
    path = Path(path)
    if not path.is_file():
        raise MissingInputError(f"no such file: {path}")
    side = sidecar_path(path)
    try:
        dims = json.loads(side.read_text())["dims"]
        d, h, w = (int(x) for x in dims)
    except (ValueError, KeyError, TypeError) as exc:
        raise MalformedHeaderError(f"{side}: sidecar must hold {{\"dims\": [D, H, W]}} ({exc})") from None
    if min(d, h, w) < 1:
        raise MalformedHeaderError(f"{side}: dims must be positive, got {dims}")
    payload = path.read_bytes()
    if len(payload) != 4 * d * h * w:
        raise DimsMismatchError(
            f"{path}: dims {[d, h, w]} need {4 * d * h * w} bytes, payload has {len(payload)}"
        )
    return np.frombuffer(payload, dtype="<f4").reshape(d, h, w).astype(np.float64)


def write_volume(path, volume) -> Path:
    path = Path(path)
    vol = np.asarray(volume, dtype="<f4")
    path.write_bytes(vol.tobytes())
    path.with_suffix(".json").write_text(json.dumps({"dims": list(vol.shape)}))
    return path


def read_frames(directory) -> np.ndarray:
    directory = Path(directory)
    if not directory.is_dir():
        raise MissingInputError(f"no such frame directory: {directory}")
    files = sorted(p for p in directory.iterdir() if p.suffix.lower() in (".pgm", ".pnm"))
    if not files:
        raise MissingInputError(f"{directory}: no .pgm frames")
    frames = [read_pgm(f) for f in files]
    if len({f.shape for f in frames}) != 1:
        raise DimsMismatchError(f"{directory}: frames differ in size")
    return np.stack(frames)


def load_input(path, kind) -> VisualInput:
    kind = SourceKind.parse(kind)
    if kind is SourceKind.IMAGE2D:
        planes = read_pgm(path)[None]
    elif kind is SourceKind.VOLUME3D:
        planes = read_volume(path)
    else:
        planes = read_frames(path)
    if not np.all(np.isfinite(planes)):
        raise InputError(f"{path}: non-finite pixel values")
    return VisualInput(kind, planes)
