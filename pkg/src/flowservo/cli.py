"""Command line entry point: ``flowservo run ...``."""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from .bench import bundled_suite, run_suite
from .errors import ConfigError
from .flowsynth import DEPTH_MODES
from .pipeline import CONTROLLERS


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="flowservo", description="Fly box-world scenarios with the flow-servoing and flow-balance controllers.")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run one scenario or a directory of scenarios")
    src = run.add_mutually_exclusive_group(required=True)
    src.add_argument("--scenario", type=Path, help="scenario JSON file")
    src.add_argument("--suite", help="directory of scenario JSON files, or 'bundled'")
    run.add_argument("--controller", action="append", choices=CONTROLLERS,
                     help="controller to run; repeat for several (default: all)")
    run.add_argument("--seed", type=int, help="override every scenario's seed")
    run.add_argument("--noise", type=float, help="flow noise sigma in pixels")
    run.add_argument("--out", type=Path, default=Path("out"), help="output directory")
    run.add_argument("--dump-flow", action="store_true", help="write desired/predicted .flo files per step")
    run.add_argument("--depth-mode", choices=DEPTH_MODES,
                     help="depth source for the servo controller (default: per scenario, egomotion)")
    run.add_argument("--jobs", type=int, default=1, help="episodes to run in parallel")
    run.add_argument("--no-plots", action="store_true", help="skip the PNG figures")
    run.add_argument("-v", "--verbose", action="store_true")

    sub.add_parser("scenarios", help="list the bundled scenario files")
    return parser


def _scenario_paths(args) -> list:
    if args.scenario is not None:
        return [args.scenario]
    if args.suite == "bundled":
        return bundled_suite()
    suite = Path(args.suite)
    if not suite.is_dir():
        raise ConfigError(f"{suite}: not a directory")
    paths = sorted(suite.glob("*.json"))
    if not paths:
        raise ConfigError(f"{suite}: no scenario files")
    return paths


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "scenarios":
        print("\n".join(bundled_suite()))
        return 0
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.noise is not None and args.noise < 0:
        print("error: --noise must be non-negative", file=sys.stderr)
        return 2
    try:
        summary = run_suite(_scenario_paths(args), args.controller or CONTROLLERS, args.out, args.seed,
                            args.noise, args.depth_mode, args.dump_flow, not args.no_plots, args.jobs)
    except (ConfigError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    print(summary.to_text(), end="")
    return 0


if __name__ == "__main__":
    sys.exit(main())
