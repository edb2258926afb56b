"""Command-line entry point.

    spinlock <kind> [--config PATH] [--out DIR] [--workers N] [--seed S] [--preset NAME]
    spinlock presets

Exit codes: 0 success, 2 invalid configuration or arguments, 3 numerical
failure.  ``SPINLOCK_WORKERS`` sets the default worker count.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
import time
from dataclasses import replace
from pathlib import Path

from .config import KINDS, parse_config, resolve_config
from .errors import ConfigError
from .runner import PRESETS, default_workers, merge, run, write_outputs

EXIT_OK = 0
EXIT_INVALID = 2
EXIT_NUMERICAL = 3


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="spinlock", description="Dissipative-qubit synchronization experiments.")
    sub = p.add_subparsers(dest="command", required=True)
    for kind in KINDS:
        s = sub.add_parser(kind, help=f"run the {kind} experiment")
        s.add_argument("--config", type=Path, help="JSON experiment file")
        s.add_argument("--out", type=Path, help="output directory (default: config 'output' or ./out-<kind>)")
        s.add_argument("--workers", type=int, default=None, help="parallel workers (default: $SPINLOCK_WORKERS or 1)")
        s.add_argument("--seed", type=int, default=None, help="override the measurement RNG seed")
        s.add_argument("--preset", choices=sorted(PRESETS), help="start from a named figure recipe")
        s.add_argument("-v", "--verbose", action="store_true")
    sub.add_parser("presets", help="list the named presets")
    return p


def _load(args):
    data = {}
    source = "<arguments>"
    if args.preset:
        data = merge(PRESETS[args.preset], {})
        source = f"preset {args.preset}"
    if args.config:
        if args.preset:
            try:
                override = json.loads(args.config.read_text())
            except (OSError, json.JSONDecodeError) as exc:
                raise ConfigError(f"{args.config}: {exc}") from None
            data = merge(data, override)
            source = str(args.config)
        else:
            cfg = parse_config(args.config)
            data = None
    if data is not None:
        if not data:
            raise ConfigError("either --config or --preset is required")
        if args.seed is not None:
            data["seed"] = args.seed
        cfg = resolve_config(data, source)
    elif args.seed is not None:
        cfg.measurement = replace(cfg.measurement, rng_seed=args.seed)
        cfg.echo["measurement"]["rng_seed"] = args.seed
    if cfg.kind != args.command:
        raise ConfigError(f"config kind {cfg.kind!r} does not match subcommand {args.command!r}")
    return cfg


def main(argv=None) -> int:
    try:
        args = _parser().parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_INVALID
    if args.command == "presets":
        for name in sorted(PRESETS):
            print(f"{name}\t{PRESETS[name]['kind']}")
        return EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        cfg = _load(args)
    except (ConfigError, ValueError) as exc:
        print(f"spinlock: invalid configuration: {exc}", file=sys.stderr)
        return EXIT_INVALID
    if args.workers is not None and args.workers < 1:
        print("spinlock: --workers must be >= 1", file=sys.stderr)
        return EXIT_INVALID
    out = args.out or (Path(cfg.output) if cfg.output else Path(f"out-{cfg.kind}"))
    workers = args.workers if args.workers is not None else default_workers()
    t0 = time.perf_counter()
    try:
        result = run(cfg, workers)
    except (ArithmeticError, RuntimeError) as exc:
        print(f"spinlock: numerical failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except ValueError as exc:
        print(f"spinlock: invalid input: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INVALID
    written = write_outputs(result, out, cfg, time.perf_counter() - t0)
    for path in written:
        print(path)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
