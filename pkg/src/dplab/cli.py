"""``dplab`` command line.

Exit status: 0 all checks pass, 1 checks failed, 2 invalid configuration,
3 run aborted (blow-up).
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

from .admissible import ConeError
from .dynamics import BlowUpError
from .experiments import RUNNERS, ConfigError, ExperimentConfig

EXIT_OK, EXIT_FAILED, EXIT_CONFIG, EXIT_ABORT = 0, 1, 2, 3

# flag name -> config field
_FLAGS = {
    "grid_n": "grid_n",
    "half_width": "half_width",
    "speed": "speed",
    "eps": "eps",
    "t_end": "t_end",
    "seed": "seed",
    "out": "out",
    "jobs": "jobs",
    "ensemble_size": "ensemble_size",
    "snapshot_every": "snapshot_every",
}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="dplab", description="DP peakon stability experiments")
    sub = p.add_subparsers(dest="command", required=True)
    for name, help_ in [
        ("verify-lemmas", "identity and inequality suite on a peakon and a seeded ensemble"),
        ("simulate", "evolve a (perturbed) peakon and write trace.csv / trace.svg"),
        ("stability-sweep", "eps sweep with log-log slope fits"),
        ("landmarks", "dump the smooth-peakon landmark table"),
    ]:
        s = sub.add_parser(name, help=help_)
        s.add_argument("--config", type=Path, help="flat JSON file with config fields")
        s.add_argument("--grid-n", type=int)
        s.add_argument("--half-width", type=float)
        s.add_argument("--speed", type=float)
        s.add_argument("--eps", type=float, nargs="+")
        s.add_argument("--t-end", type=float)
        s.add_argument("--seed", type=int)
        s.add_argument("--out", type=str)
        s.add_argument("--jobs", type=int)
        s.add_argument("--ensemble-size", type=int)
        s.add_argument("--snapshot-every", type=int)
        s.add_argument("-v", "--verbose", action="store_true")
    return p


def resolve_config(args: argparse.Namespace) -> ExperimentConfig:
    base: dict = {}
    if args.config is not None:
        try:
            base = json.loads(args.config.read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {args.config}: {exc}") from None
        if not isinstance(base, dict):
            raise ConfigError("config file must hold a JSON object")
    base["command"] = args.command
    try:
        cfg = ExperimentConfig.from_dict(base)
    except TypeError as exc:
        raise ConfigError(str(exc)) from None
    overrides = {f: getattr(args, a) for a, f in _FLAGS.items() if getattr(args, a) is not None}
    cfg = replace(cfg, **overrides).with_defaults()
    cfg.validate()
    return cfg


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = resolve_config(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        outcome = RUNNERS[cfg.command](cfg)
    except ConeError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except BlowUpError as exc:
        print(f"aborted: {exc}", file=sys.stderr)
        return EXIT_ABORT
    print(outcome.summary)
    print(("PASS" if outcome.passed else "FAIL") + f" ({cfg.out})")
    return EXIT_OK if outcome.passed else EXIT_FAILED


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
