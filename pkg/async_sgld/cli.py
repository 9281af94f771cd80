# Copyright 2026 async-sgld contributors.
# See LICENSE file for licensing details.

"""Command line entry point: run, theory, metrics and report."""

import argparse
import logging
import sys
from pathlib import Path
from typing import Any, Dict, List, Optional

from logfmter import Logfmter

from async_sgld import harness
from async_sgld.config import SCHEMES, load_config
from async_sgld.errors import SgldError

logger = logging.getLogger(__name__)


def setup_logging(level: str) -> None:
    """Send logfmt lines to stderr."""
    handler = logging.StreamHandler(sys.stderr)
    handler.setFormatter(
        Logfmter(keys=["at", "logger"], mapping={"at": "levelname", "logger": "name"})
    )
    root = logging.getLogger()
    root.handlers[:] = [handler]
    root.setLevel(level.upper())


def _add_config_args(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", type=Path, help="flat YAML experiment config")
    parser.add_argument("--seed", type=int, help="master seed (overrides the config)")
    parser.add_argument("--out", type=str, help="output directory (overrides the config)")
    parser.add_argument("--scheme", choices=SCHEMES, help="sampler scheme")
    parser.add_argument("--workers", type=int, help="worker count P")


def parse_args(argv: Optional[List[str]] = None) -> argparse.Namespace:
    """Parse the command line."""
    parser = argparse.ArgumentParser(
        prog="async-sgld", description="Delayed and asynchronous SGLD experiments."
    )
    parser.add_argument(
        "--log-level",
        default="INFO",
        choices=["DEBUG", "INFO", "WARNING", "ERROR"],
        help="log verbosity (default INFO)",
    )
    commands = parser.add_subparsers(dest="command", required=True)

    run = commands.add_parser("run", help="run one experiment from a config")
    _add_config_args(run)
    theory = commands.add_parser("theory", help="step-size and iteration prescriptions")
    _add_config_args(theory)

    metrics = commands.add_parser("metrics", help="recompute W2/KL series of a stored run")
    metrics.add_argument("--run", type=Path, required=True, help="run output directory")

    compare = commands.add_parser("report", help="time-to-threshold comparison of runs")
    compare.add_argument("--runs", type=Path, nargs="+", required=True, help="run directories")
    compare.add_argument("--threshold", type=float, required=True, help="W2 threshold")
    compare.add_argument("--out", type=Path, required=True, help="report directory")
    return parser.parse_args(argv)


def _overrides(args: argparse.Namespace) -> Dict[str, Any]:
    return {key: getattr(args, key) for key in ("seed", "out", "scheme", "workers")}


def main(argv: Optional[List[str]] = None) -> int:
    """Entry point; returns the process exit code (0, 2 input, 3 data, 4 numerical)."""
    args = parse_args(argv)
    setup_logging(args.log_level)
    try:
        if args.command == "run":
            result = harness.run_experiment(load_config(args.config, _overrides(args)))
            out = result.paths["summary.txt"].parent
            logger.info("artifacts written", extra={"out": str(out)})
        elif args.command == "theory":
            table = harness.theory_report(load_config(args.config, _overrides(args)))
            logger.info("theory table has %d rows", len(table))
        elif args.command == "metrics":
            harness.recompute_metrics(args.run)
        else:
            harness.compare_report(args.runs, args.out, args.threshold)
    except SgldError as exc:
        logger.error("%s", exc, extra={"error": type(exc).__name__})
        return exc.exit_code
    return 0


if __name__ == "__main__":
    sys.exit(main())
