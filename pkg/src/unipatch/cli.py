"""Command-line entry point.

    unipatch --input scan.pgm --kind image
    unipatch --input frames/ --kind video --tau 0.1 --stride 2 --out report.json
    unipatch --input frames/ --kind video --bench-tau 0,0.05,0.1,0.5
    unipatch --gen-synthetic video:0.629:8:224x224 --out frames/ --seed 0
    unipatch --glob 'scans/*.pgm' --kind image --out reports/

Exit codes: 0 success, 2 input error, 3 config error, 4 internal invariant
violation. ``UNIPATCH_THREADS`` caps batch-mode parallelism.
"""
from __future__ import annotations

import argparse
import glob as globlib
import json
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import replace
from pathlib import Path

from .errors import ConfigError, InputError, StageError
from .pipeline import DESK_DEFAULT, PipelineConfig, bench_tau, run_pipeline
from .synthetic import gen_synthetic
from .vistream import PATCH

EXIT_OK, EXIT_INPUT, EXIT_CONFIG, EXIT_INVARIANT = 0, 2, 3, 4


def thread_cap() -> int:
    raw = os.environ.get("UNIPATCH_THREADS")
    if raw is None:
        return os.cpu_count() or 1
    try:
        n = int(raw)
    except ValueError:
        raise ConfigError(f"UNIPATCH_THREADS must be an integer, got {raw!r}") from None
    if n < 1:
        raise ConfigError("UNIPATCH_THREADS must be >= 1")
    return n


def _triple(text: str) -> tuple[int, int, int]:
    try:
        parts = tuple(int(x) for x in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected layers,d,heads, got {text!r}") from None
    if len(parts) != 3:
        raise argparse.ArgumentTypeError(f"expected layers,d,heads, got {text!r}")
    return parts


def _floats(text: str) -> list[float]:
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def parse_synthetic(spec: str):
    """``kind:redundancy:planes:HxW`` -> (kind, redundancy, planes, (H, W))."""
    try:
        kind, red, planes, dims = spec.split(":")
        h, w = dims.lower().split("x")
        return kind, float(red), int(planes), (int(h), int(w))
    except ValueError:
        raise ConfigError(f"--gen-synthetic expects kind:redundancy:planes:HxW, got {spec!r}") from None


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="unipatch", description=__doc__.split("\n\n")[0])
    ap.add_argument("--input", help="image .pgm, volume .raw (with .json sidecar) or frame directory")
    ap.add_argument("--glob", help="batch mode: run every path matching this pattern")
    ap.add_argument("--kind", choices=["image", "volume", "video"], default="image")
    ap.add_argument("--tau", type=float, default=0.1)
    ap.add_argument("--patch", type=int, default=PATCH)
    ap.add_argument("--stride", type=int, default=1, help="video frame sampling stride")
    ap.add_argument("--merge", choices=["auto", "on", "off"], default="auto")
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--out", help="output file (directory in batch / synthetic video mode)")
    ap.add_argument("--bench-tau", type=_floats, metavar="T1,T2,...")
    ap.add_argument("--gen-synthetic", metavar="KIND:REDUNDANCY:PLANES:HxW")
    ap.add_argument("--desk-config", type=_triple, default=DESK_DEFAULT, metavar="LAYERS,D,HEADS")
    return ap


def _emit(payload, out):
    text = json.dumps(payload, indent=2, sort_keys=True)
    if out:
        Path(out).parent.mkdir(parents=True, exist_ok=True)
        Path(out).write_text(text + "\n")
    else:
        print(text)


def _run_batch(config: PipelineConfig, pattern: str):
    paths = sorted(globlib.glob(pattern))
    if not paths:
        raise InputError(f"--glob {pattern!r} matched nothing")

    def one(path):
        return path, run_pipeline(replace(config, input=path, out=None))

    with ThreadPoolExecutor(max_workers=min(thread_cap(), len(paths))) as pool:
        results = list(pool.map(one, paths))
    if config.out:
        out_dir = Path(config.out)
        out_dir.mkdir(parents=True, exist_ok=True)
        for path, report in results:
            (out_dir / (Path(path).name + ".json")).write_text(json.dumps(report, indent=2, sort_keys=True) + "\n")
    else:
        print(json.dumps({p: r for p, r in results}, indent=2, sort_keys=True))


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.gen_synthetic:
            kind, red, planes, dims = parse_synthetic(args.gen_synthetic)
            if not args.out:
                raise ConfigError("--gen-synthetic needs --out")
            path = gen_synthetic(kind, red, planes, dims, args.seed, args.out, tau=args.tau, patch=args.patch)
            print(json.dumps({"written": str(path)}))
            return EXIT_OK
        config = PipelineConfig(
            input=args.input, kind=args.kind, patch=args.patch,
            merge={"auto": None, "on": True, "off": False}[args.merge],
            tau=args.tau, stride=args.stride, desk=args.desk_config, seed=args.seed, out=args.out,
        )
        if args.glob:
            _run_batch(config, args.glob)
        elif args.bench_tau is not None:
            _emit({"input": args.input, "kind": args.kind, "rows": bench_tau(config, args.bench_tau)}, args.out)
        else:
            if not args.input:
                raise InputError("--input is required")
            _emit(run_pipeline(config), args.out)
    except StageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return _exit_code(exc.cause)
    except Exception as exc:  # noqa: BLE001 - mapped to documented exit codes
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return _exit_code(exc)
    return EXIT_OK


def _exit_code(exc) -> int:
    if isinstance(exc, InputError):
        return EXIT_INPUT
    if isinstance(exc, ConfigError):
        return EXIT_CONFIG
    return EXIT_INVARIANT


if __name__ == "__main__":
    sys.exit(main())
