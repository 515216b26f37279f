#!/usr/bin/env python3
"""
Command-line entry point for the histories simulation toolkit.

    python -m histories_sim run scenario.json [--seed N] [--out DIR] [--threads K]
    python -m histories_sim validate scenario.json
    python -m histories_sim list-scenarios
    python -m histories_sim arrival [--seed N] [--out DIR] [--threads K]

Exit codes: 0 success, 1 unexpected failure, 2 validation error,
3 numerical guard tripped.
"""
import argparse
import logging
import sys
from pathlib import Path
from typing import List, Optional

from histories_sim import __version__
from histories_sim.config import config
from histories_sim.scenarios import (
    KINDS,
    ResultWriter,
    Scenario,
    ScenarioRunner,
    bundled_scenario,
    list_scenarios,
    load_scenario,
)
from histories_sim.utils.errors import NumericalGuardError, ValidationError
from histories_sim.utils.logger import setup_logging

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_VALIDATION = 2
EXIT_NUMERICAL = 3


def _add_run_options(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--seed", type=int, default=None, help="Override the scenario's master seed")
    parser.add_argument("--out", type=Path, default=None, help="Run directory (default: OUTPUT_DIR/<name>)")
    parser.add_argument("--threads", type=int, default=None, help="Worker threads for trajectory ensembles")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="histories-sim",
        description="Decoherent-histories simulations driven by declarative scenario files",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("--log-level", default=config.LOG_LEVEL, help="DEBUG, INFO, WARNING or ERROR")
    parser.add_argument("--no-log-file", action="store_true", help="Log to stderr only")
    commands = parser.add_subparsers(dest="command", required=True)

    run = commands.add_parser("run", help="Run a scenario file and write its results")
    run.add_argument("file", type=Path, help="Scenario file (JSON or YAML)")
    _add_run_options(run)

    validate = commands.add_parser("validate", help="Validate a scenario file without running it")
    validate.add_argument("file", type=Path, help="Scenario file (JSON or YAML)")

    commands.add_parser("list-scenarios", help="List the bundled scenarios")

    for kind in KINDS:
        bundled = commands.add_parser(kind, help=f"Run the bundled {kind} scenario")
        _add_run_options(bundled)
    return parser


def print_issues(error: ValidationError) -> None:
    print(f"Validation failed: {error}", file=sys.stderr)
    for path, problem in error.issues:
        print(f"  {path}: {problem}", file=sys.stderr)


def execute(scenario: Scenario, args: argparse.Namespace) -> int:
    """Run a validated scenario, write its bundle and print the summary."""
    if args.threads is not None and args.threads < 1:
        raise ValidationError("invalid thread count", [("--threads", f"must be >= 1, got {args.threads}")])
    scenario = scenario.with_seed(args.seed)
    bundle = ScenarioRunner(args.threads).run(scenario)
    target = ResultWriter(config.OUTPUT_DIR).write(bundle, args.out)

    print("=" * 60)
    print(f"{scenario.name} ({scenario.kind}) seed={scenario.seed}")
    print("=" * 60)
    for key, value in bundle.summary.items():
        print(f"  {key:<36} {value}")
    print(f"Results: {target}")
    return EXIT_OK


def dispatch(args: argparse.Namespace) -> int:
    if args.command == "list-scenarios":
        entries = list_scenarios()
        for entry in entries:
            print(entry)
        print(f"{len(entries)} bundled scenarios")
        return EXIT_OK
    if args.command == "validate":
        scenario = load_scenario(args.file)
        print(f"{args.file}: valid {scenario.kind} scenario '{scenario.name}' (hash {scenario.fingerprint()[:12]})")
        return EXIT_OK
    if args.command == "run":
        return execute(load_scenario(args.file), args)
    return execute(bundled_scenario(args.command), args)


def main(argv: Optional[List[str]] = None) -> int:
    """
    Main entry point.

    Returns:
        int: Process exit code
    """
    args = build_parser().parse_args(argv)
    setup_logging(
        log_level=args.log_level,
        log_file=config.LOG_FILE,
        log_dir=config.LOGS_DIR,
        log_format=config.LOG_FORMAT,
        to_file=config.LOG_TO_FILE and not args.no_log_file,
    )
    logger = logging.getLogger(__name__)

    try:
        config.validate()
        return dispatch(args)
    except ValidationError as e:
        logger.error(f"Validation error: {e}")
        print_issues(e)
        return EXIT_VALIDATION
    except NumericalGuardError as e:
        logger.error(f"Numerical guard tripped in {e.module} ({e.invariant}): {e}")
        print(f"Numerical guard: {e}", file=sys.stderr)
        return EXIT_NUMERICAL
    except ValueError as e:
        logger.error(f"Configuration error: {e}")
        print(f"Configuration error: {e}", file=sys.stderr)
        return EXIT_FAILURE
    except Exception as e:
        logger.error(f"Fatal error: {e}", exc_info=True)
        return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())
