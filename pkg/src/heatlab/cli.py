"""Command-line front end: ``heatlab simulate|verify|decay-sweep|decompose``."""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .config import ConfigError, load_config
from .runner import COMMANDS


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="heatlab",
        description=(
            "Pseudospectral lab for the L2-critical semilinear heat equation "
            "with rough radial data: simulation, decay-rate measurement, and "
            "inequality verification on a periodic box."
        ),
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in (
        ("simulate", "integrate one trajectory and write its records"),
        ("verify", "run the inequality ratio suites over an ensemble"),
        ("decay-sweep", "measure decay exponents across a gamma0 list"),
        ("decompose", "sweep the rough/remainder data split across scales"),
    ):
        cmd = sub.add_parser(name, help=help_text)
        cmd.add_argument("--config", required=True, type=Path, help="INI-style run configuration")
        cmd.add_argument("--jobs", type=int, default=None, help="ensemble-level worker processes")
        cmd.add_argument("--output", type=Path, default=None, help="override [run] output_dir")
        cmd.add_argument("--plots", action="store_true", help="emit SVG plots")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        text = args.config.read_text()
    except OSError as exc:
        print(f"error: cannot read config: {exc}", file=sys.stderr)
        return 1
    try:
        cfg = load_config(text)
    except ConfigError as exc:
        print(f"error: {args.config}: {exc}", file=sys.stderr)
        return 1
    if cfg.experiment != args.command:
        # the subcommand wins; the config's experiment field is a default
        cfg.experiment = args.command
    if args.output is not None:
        cfg.output_dir = str(args.output)
    if args.jobs is not None:
        if args.jobs < 1:
            print("error: --jobs must be >= 1", file=sys.stderr)
            return 1
        cfg.jobs = args.jobs
    if args.plots:
        cfg.emit_plots = True

    outcome = COMMANDS[cfg.experiment](cfg)
    for key, value in sorted(outcome.summary.items()):
        print(f"{key}: {value}")
    print(f"artifacts: {outcome.out_dir}")
    return outcome.exit_code


if __name__ == "__main__":
    sys.exit(main())
