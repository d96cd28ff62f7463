"""Two-stage visual token reduction.

Stage 1 merges every 2x2 block of tokens inside a plane. Stage 2 walks the
planes in order and drops a token when it is nearly identical to the token
at the same grid site of the preceding plane: the mean absolute difference
across features falls below ``tau``. Exact duplicates are always dropped,
so ``tau = 0`` removes only those.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import ConfigError, InvariantError, ShapeError
from .numkit import downsample2x
from .vistream import PlaneSequence, SourceKind, TokenPlane

DEFAULT_TAU = 0.1


@dataclass
class PlaneCount:
    plane_index: int
    kept: int
    pruned: int


@dataclass
class ReductionReport:
    patch_tokens: int  # before any reduction
    total_before: int  # entering the pruning stage (after the merge, if any)
    total_after: int
    merged_away: int
    pruned: int
    rate: float  # pruned / total_before
    tau: float
    merged: bool
    per_plane: list[PlaneCount] = field(default_factory=list)

    def check(self):
        if self.patch_tokens - self.merged_away != self.total_before:
            raise InvariantError("merge counts do not reconcile")
        if self.total_before - self.pruned != self.total_after:
            raise InvariantError("prune counts do not reconcile")
        if sum(p.kept for p in self.per_plane) != self.total_after:
            raise InvariantError("per-plane kept counts do not sum to total_after")
        if sum(p.pruned for p in self.per_plane) != self.pruned:
            raise InvariantError("per-plane pruned counts do not sum to pruned")
        if not 0.0 <= self.rate <= 1.0:
            raise InvariantError(f"rate {self.rate} outside [0, 1]")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class PrunedSequence:
    source_kind: SourceKind
    planes: list[TokenPlane]
    plane_index: list[int]
    masks: list[np.ndarray]  # bool keep mask per plane, aligned with plane.tokens

    @property
    def kept_count(self) -> int:
        return int(sum(m.sum() for m in self.masks))

    def kept_tokens(self) -> tuple[np.ndarray, np.ndarray]:
        """Kept token rows (plane-major, row-major) and their (plane, m, n) provenance."""
        rows, prov = [], []
        for idx, plane, mask in zip(self.plane_index, self.planes, self.masks):
            rows.append(plane.tokens[mask])
            c = plane.coords[mask]
            prov.append(np.column_stack([np.full(len(c), idx, dtype=np.int64), c]))
        return np.concatenate(rows, axis=0), np.concatenate(prov, axis=0)


def merge_2x2(plane: TokenPlane) -> TokenPlane:
    """Average each 2x2 token block into one token on a half-size grid."""
    if plane.grid_h == 0 or plane.grid_w == 0:
        raise ShapeError("cannot merge an empty plane", (plane.grid_h, plane.grid_w))
    merged = downsample2x(plane.as_grid())
    gh, gw, d = merged.shape
    return TokenPlane(gh, gw, merged.reshape(gh * gw, d))


def site_distances(prev: np.ndarray, cur: np.ndarray) -> np.ndarray:
    """Per-site normalised L1 distance between two (N, d) token blocks."""
    return np.abs(cur - prev).mean(axis=1)


def prune_interplane(seq: PlaneSequence, tau: float = DEFAULT_TAU):
    """Keep plane 0 whole; drop later tokens close to their predecessor at the same site.

    The reference is always the preceding plane's original token, pruned or
    not. Returns ``(PrunedSequence, ReductionReport)``; the report's merge
    fields assume no merge happened (``reduce_pipeline`` fills them in).
    """
    if not tau >= 0:
        raise ConfigError(f"tau must be >= 0, got {tau!r}")
    shape = (seq.planes[0].grid_h, seq.planes[0].grid_w, seq.planes[0].d)
    for p in seq.planes[1:]:
        if (p.grid_h, p.grid_w, p.d) != shape:
            raise ShapeError("all planes must share one token grid", shape, (p.grid_h, p.grid_w, p.d))

    masks = [np.ones(seq.planes[0].tokens.shape[0], dtype=bool)]
    for prev, cur in zip(seq.planes[:-1], seq.planes[1:]):
        dist = site_distances(prev.tokens, cur.tokens)
        masks.append(~((dist < tau) | (dist == 0.0)))

    per_plane = [
        PlaneCount(int(i), int(m.sum()), int(m.size - m.sum()))
        for i, m in zip(seq.plane_index, masks)
    ]
    before = seq.token_count
    pruned = sum(p.pruned for p in per_plane)
    report = ReductionReport(
        patch_tokens=before,
        total_before=before,
        total_after=before - pruned,
        merged_away=0,
        pruned=pruned,
        rate=pruned / before,
        tau=float(tau),
        merged=False,
        per_plane=per_plane,
    )
    report.check()
    return PrunedSequence(seq.source_kind, list(seq.planes), list(seq.plane_index), masks), report


def reduce_pipeline(seq: PlaneSequence, kind=None, tau: float = DEFAULT_TAU, merge: bool | None = None):
    """Apply the reduction appropriate for the source kind.

    Single images pass through untouched. Volumes and videos are merged 2x2
    per plane and then pruned across planes. ``merge`` overrides the merge
    gate when not None.
    """
    kind = SourceKind.parse(kind if kind is not None else seq.source_kind)
    do_merge = kind is not SourceKind.IMAGE2D if merge is None else bool(merge)
    patch_tokens = seq.token_count
    if do_merge:
        seq = PlaneSequence(seq.source_kind, [merge_2x2(p) for p in seq.planes], list(seq.plane_index))
    # a single image has one plane, so nothing can be pruned against it
    pruned_seq, report = prune_interplane(seq, tau=tau)
    report.patch_tokens = patch_tokens
    report.merged_away = patch_tokens - report.total_before
    report.merged = do_merge
    report.check()
    return pruned_seq, report
