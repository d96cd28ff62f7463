"""End-to-end runs: decode -> planes -> patches -> tokens -> reduction -> encoder -> projector."""
from __future__ import annotations

import time
from contextlib import contextmanager
from dataclasses import dataclass, field

import numpy as np

from . import encoder as enc
from .errors import ConfigError, InputError, InvariantError, StageError
from .pgmio import load_input
from .projector import ProjectorParams, project
from .tokred import DEFAULT_TAU, reduce_pipeline
from .vistream import PATCH, SourceKind, VisualInput, decompose, tokenize

DESK_DEFAULT = (2, 16, 2)


@dataclass
class PipelineConfig:
    input: str | None = None
    kind: SourceKind = SourceKind.IMAGE2D
    patch: int = PATCH
    merge: bool | None = None  # None: merge volumes/videos, not images
    tau: float = DEFAULT_TAU
    stride: int = 1
    desk: tuple[int, int, int] = DESK_DEFAULT  # encoder layers, d_model, heads
    d_hidden: int = 16
    d_llm: int = 12
    seed: int = 0
    out: str | None = None

    def __post_init__(self):
        self.kind = SourceKind.parse(self.kind)
        if int(self.patch) != self.patch or self.patch < 1:
            raise ConfigError(f"patch must be a positive integer, got {self.patch}")
        if not self.tau >= 0:
            raise ConfigError(f"tau must be >= 0, got {self.tau}")
        if int(self.stride) != self.stride or self.stride < 1:
            raise ConfigError(f"stride must be a positive integer, got {self.stride}")
        if self.d_hidden < 1 or self.d_llm < 1:
            raise ConfigError("projector widths must be positive")

    def encoder_config(self) -> enc.EncoderConfig:
        layers, d_model, heads = self.desk
        return enc.EncoderConfig(layers=layers, d_model=d_model, d_mlp=2 * d_model, heads=heads, patch=self.patch)


class Timer:
    def __init__(self):
        self.ms = {}

    @contextmanager
    def stage(self, name):
        t0 = time.perf_counter()
        try:
            yield
        except StageError:
            raise
        except Exception as exc:
            raise StageError(name, exc) from exc
        finally:
            self.ms[name] = round((time.perf_counter() - t0) * 1e3, 3)


@dataclass
class Prepared:
    """Everything upstream of reduction, reusable across tau values."""

    config: PipelineConfig
    visual: VisualInput
    tokens: object  # PlaneSequence
    enc_config: enc.EncoderConfig
    enc_params: dict
    proj: ProjectorParams
    timer: Timer = field(default_factory=Timer)


def prepare(config: PipelineConfig, visual: VisualInput | None = None) -> Prepared:
    timer = Timer()
    with timer.stage("config"):
        enc_config = config.encoder_config()
        enc_params = enc.init_params(enc_config, config.seed)
        proj = ProjectorParams.init(enc_config.d_model, config.d_hidden, config.d_llm, seed=config.seed + 1)
    with timer.stage("load"):
        if visual is None:
            if config.input is None:
                raise InputError("no input given")
            visual = load_input(config.input, config.kind)
        elif visual.kind is not config.kind:
            raise ConfigError(f"input is {visual.kind.value}, config says {config.kind.value}")
    with timer.stage("decompose"):
        pixels = decompose(visual, config.stride)
    with timer.stage("patchify_embed"):
        tokens = tokenize(pixels, enc_params["embed_w"], enc_params["embed_b"], config.patch)
    return Prepared(config, visual, tokens, enc_config, enc_params, proj, timer)


def _encode(prep: Prepared, tau: float, timer: Timer):
    with timer.stage("reduce"):
        pruned, report = reduce_pipeline(prep.tokens, prep.config.kind, tau, prep.config.merge)
    with timer.stage("encoder"):
        h_v = enc.encoder_forward(pruned, prep.enc_params, prep.enc_config)
    return pruned, report, h_v


def run_pipeline(config: PipelineConfig, visual: VisualInput | None = None) -> dict:
    """Run every stage once and return the token-budget report."""
    prep = prepare(config, visual)
    timer = prep.timer
    pruned, report, h_v = _encode(prep, config.tau, timer)
    with timer.stage("projector"):
        h_proj = project(h_v, prep.proj)
    first = prep.tokens.planes[0]
    result = {
        "input_kind": config.kind.value,
        "planes": len(prep.tokens.planes),
        "grid": [first.grid_h, first.grid_w],
        "tokens_before": report.patch_tokens,
        "tokens_after_merge": report.total_before,
        "tokens_after_prune": report.total_after,
        "pruned": report.pruned,
        "rate": report.rate,
        "tau": float(config.tau),
        "merged": report.merged,
        "encoder_output_shape": list(h_v.shape),
        "projector_output_shape": list(h_proj.shape),
        "per_plane": [vars(p) for p in report.per_plane],
        "timings_ms": timer.ms,
    }
    check_report(result)
    return result


def check_report(r: dict):
    """Token arithmetic of a run report must reconcile exactly."""
    gh, gw = r["grid"]
    if r["tokens_before"] != r["planes"] * gh * gw:
        raise InvariantError("tokens_before != planes * grid")
    merged = r["planes"] * (-(-gh // 2)) * (-(-gw // 2)) if r["merged"] else r["tokens_before"]
    if r["tokens_after_merge"] != merged:
        raise InvariantError("tokens_after_merge does not match the merged grid")
    if r["tokens_after_prune"] != r["tokens_after_merge"] - r["pruned"]:
        raise InvariantError("tokens_after_prune != tokens_after_merge - pruned")
    if r["encoder_output_shape"][0] != r["tokens_after_prune"] or \
            r["projector_output_shape"][0] != r["tokens_after_prune"]:
        raise InvariantError("encoder/projector rows differ from kept tokens")


def bench_tau(config: PipelineConfig, taus, visual: VisualInput | None = None) -> list[dict]:
    """Pruning rate and encoder-output drift for each tau.

    Drift is the mean L2 distance, over tokens kept at that tau, between
    their encoder output and the output of the same token in the tau = 0 run.
    """
    taus = [float(t) for t in taus]
    if not taus:
        raise ConfigError("tau grid must be non-empty")
    prep = prepare(config, visual)
    timer = Timer()
    base_seq, _, base_h = _encode(prep, 0.0, timer)
    _, base_prov = base_seq.kept_tokens()
    index = {tuple(row): i for i, row in enumerate(base_prov.tolist())}

    rows = []
    for tau in taus:
        seq, report, h = _encode(prep, tau, timer)
        _, prov = seq.kept_tokens()
        try:
            ref = base_h[[index[tuple(r)] for r in prov.tolist()]]
        except KeyError:
            raise InvariantError(f"tau={tau} kept a token that tau=0 pruned") from None
        drift = float(np.linalg.norm(h - ref, axis=1).mean()) if len(h) else 0.0
        rows.append({"tau": tau, "rate": report.rate, "kept": report.total_after, "drift": drift})
    ordered = sorted(rows, key=lambda r: r["tau"])
    for a, b in zip(ordered, ordered[1:]):
        if b["rate"] < a["rate"]:
            raise InvariantError(f"pruning rate fell from {a['rate']} to {b['rate']} as tau rose")
    return rows
