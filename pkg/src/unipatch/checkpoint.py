"""Parameter checkpoints: one flat little-endian float64 blob plus a JSON manifest.

``save_checkpoint("run/enc", tensors)`` writes ``run/enc.bin`` and
``run/enc.json``. The manifest maps each tensor name to its shape and its
byte offset inside the blob.
"""
from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .errors import InputError

FORMAT = "unipatch-checkpoint/1"
DTYPE = "<f8"


def _paths(stem) -> tuple[Path, Path]:
    stem = Path(stem)
    return stem.with_name(stem.name + ".bin"), stem.with_name(stem.name + ".json")


def save_checkpoint(stem, tensors: dict) -> tuple[Path, Path]:
    blob_path, manifest_path = _paths(stem)
    blob_path.parent.mkdir(parents=True, exist_ok=True)
    entries = {}
    offset = 0
    with open(blob_path, "wb") as fh:
        for name in sorted(tensors):
            arr = np.ascontiguousarray(tensors[name], dtype=DTYPE)
            entries[name] = {"shape": list(arr.shape), "offset": offset}
            fh.write(arr.tobytes())
            offset += arr.nbytes
    manifest = {"format": FORMAT, "dtype": DTYPE, "byte_order": "little", "nbytes": offset, "tensors": entries}
    manifest_path.write_text(json.dumps(manifest, indent=2, sort_keys=True))
    return blob_path, manifest_path


def load_checkpoint(stem) -> dict:
    blob_path, manifest_path = _paths(stem)
    try:
        manifest = json.loads(manifest_path.read_text())
        blob = blob_path.read_bytes()
    except FileNotFoundError as exc:
        raise InputError(f"checkpoint file missing: {exc.filename}") from None
    if manifest.get("format") != FORMAT or manifest.get("dtype") != DTYPE:
        raise InputError(f"unsupported checkpoint manifest in {manifest_path}")
    if len(blob) != manifest["nbytes"]:
        raise InputError(f"checkpoint blob is {len(blob)} bytes, manifest says {manifest['nbytes']}")
    out = {}
    for name, entry in manifest["tensors"].items():
        count = int(np.prod(entry["shape"], dtype=np.int64))
        arr = np.frombuffer(blob, dtype=DTYPE, count=count, offset=entry["offset"])
        out[name] = arr.reshape(entry["shape"]).astype(np.float64)
    return out
