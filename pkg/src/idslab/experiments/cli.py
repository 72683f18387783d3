"""Command line: one subcommand per experiment kind, plus ``plot``."""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .._parallel import THREADS_ENV, default_threads
from ..spectral import ResourceCapError
from .config import KINDS, ConfigError, ExperimentConfig, load_config, parse_config
from .plots import PANELS, EmptyResultError, MissingColumnError, emit_plots
from .runner import run_experiment

EXIT_OK, EXIT_INVALID, EXIT_RESOURCE, EXIT_CHECK = 0, 2, 3, 4


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="idslab", description="Disordered lattice IDS experiments.")
    sub = p.add_subparsers(dest="command", required=True)
    for kind in KINDS:
        s = sub.add_parser(kind, help=f"run a {kind} experiment")
        s.add_argument("--config", required=True, type=Path, help="JSON experiment config")
        s.add_argument("--out", type=Path, help="output directory (overrides config)")
        s.add_argument("--seed", type=int, help="master seed (overrides config)")
        s.add_argument("--threads", type=int, help=f"worker threads (default ${THREADS_ENV} or 1)")
        s.add_argument("--check", action="store_true", help="exit 4 if any report check fails")
    s = sub.add_parser("plot", help="render SVG panels from result files")
    s.add_argument("results", nargs="+", type=Path)
    s.add_argument("--out", type=Path, default=Path("plots"))
    s.add_argument("--panel", action="append", choices=PANELS)
    return p


def _load(args) -> ExperimentConfig:
    cfg = load_config(args.config)
    if cfg.kind != args.command:
        raise ConfigError([("$.kind", f"config is {cfg.kind!r} but subcommand is {args.command!r}")])
    if args.seed is not None:
        raw = dict(cfg.raw, seed=args.seed)
        cfg = parse_config(raw)
    return cfg


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "plot":
        try:
            for path in emit_plots(args.results, args.out, args.panel):
                print(path)
        except (EmptyResultError, MissingColumnError, ValueError) as exc:
            print(f"error: {exc}", file=sys.stderr)
            return EXIT_INVALID
        return EXIT_OK

    try:
        cfg = _load(args)
        res = run_experiment(cfg, args.out, args.threads or default_threads())
    except ConfigError as exc:
        print(json.dumps(exc.report(), indent=2), file=sys.stderr)
        return EXIT_INVALID
    except ResourceCapError as exc:
        print(f"resource cap: {exc}", file=sys.stderr)
        return EXIT_RESOURCE
    print(res.out_dir)
    if args.check:
        failed = [k for k, ok in res.checks.items() if not ok]
        for k in failed:
            print(f"FAIL {k}", file=sys.stderr)
        if failed:
            return EXIT_CHECK
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
