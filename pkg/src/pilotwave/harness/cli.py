"""``pilotwave`` command-line entry point.

Exit codes: 0 success, 1 scientific assertion failed, 2 configuration
error, 3 numerical failure (a ``last_good.json`` dump is written).
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from pathlib import Path

from ..errors import (ComparisonError, ConfigurationError, DomainError, InitializationError, MetricError,
                      NodeError, NumericalError, RegimeError, UndefinedPhaseError)
from . import experiments as X
from .schema import load_scenario

log = logging.getLogger("pilotwave")

CONFIG_ERRORS = (ConfigurationError, InitializationError, MetricError, DomainError, NodeError,
                 UndefinedPhaseError, RegimeError)


def _u64(text: str) -> int:
    try:
        v = int(text, 0)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}")
    if not 0 <= v < 2**64:
        raise argparse.ArgumentTypeError("seed must fit in an unsigned 64-bit integer")
    return v


def _positive_float(text: str) -> float:
    try:
        v = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a number: {text!r}")
    if not v > 0:
        raise argparse.ArgumentTypeError("tolerance must be positive")
    return v


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="pilotwave", description="Relativistic pilot-wave trajectory experiments.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in X.COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--scenario", required=True, help="scenario JSON file")
        p.add_argument("--out", help="output directory (default: outputs.path or ./pilotwave_out)")
        p.add_argument("--format", choices=("csv", "json"), help="trajectory file format")
        p.add_argument("--seed", type=_u64, help="ensemble RNG seed (unsigned 64-bit)")
        p.add_argument("--tol", type=_positive_float, help="compare-conformal tolerance (default 1e-6)")
        p.add_argument("-v", "--verbose", action="store_true")
    return parser


def _write(out_dir: Path, artifacts: dict) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    for name, text in sorted(artifacts.items()):
        with open(out_dir / name, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)


def execute(command: str, scenario_path, out=None, fmt=None, seed=None, tol=None) -> int:
    """Run one subcommand and write its artifacts; returns the exit code."""
    try:
        scn = load_scenario(scenario_path)
    except ConfigurationError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return X.EXIT_CONFIG
    out_dir = Path(out or scn.get("outputs", {}).get("path") or "pilotwave_out")
    kwargs = {"fmt": fmt}
    if command == "ensemble":
        kwargs["seed"] = seed
    if command == "compare-conformal":
        kwargs["tol"] = tol
    try:
        outcome = X.COMMANDS[command](scn, **kwargs)
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        _write(out_dir, {"last_good.json": X.dumps({"error": str(exc), "command": command,
                                                     "last_good": exc.last_good})})
        return X.EXIT_NUMERICAL
    except ComparisonError as exc:
        print(f"comparison failed: {exc}", file=sys.stderr)
        return X.EXIT_SCIENTIFIC
    except CONFIG_ERRORS as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return X.EXIT_CONFIG
    _write(out_dir, outcome.artifacts)
    log.info("%s: exit %d, wrote %s", command, outcome.exit_code, ", ".join(sorted(outcome.artifacts)))
    return outcome.exit_code


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if os.environ.get("PILOTWAVE_THREADS"):
        log.info("PILOTWAVE_THREADS=%s", os.environ["PILOTWAVE_THREADS"])
    return execute(args.command, args.scenario, args.out, args.format, args.seed, args.tol)


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
