#!/usr/bin/env python3
"""
Run every bundled scenario and write its results under OUTPUT_DIR.
Prints one line per scenario; exits non-zero if any run fails.
"""
import argparse
import sys
import time
from pathlib import Path

# Add parent directory to path
sys.path.insert(0, str(Path(__file__).parent.parent))

from histories_sim.config import config
from histories_sim.scenarios import ResultWriter, ScenarioRunner, list_scenarios, load_scenario
from histories_sim.utils.errors import HistoriesError
from histories_sim.utils.logger import get_logger, setup_logging


def main():
    """Run the bundled catalog."""
    parser = argparse.ArgumentParser(description="Run every bundled scenario")
    parser.add_argument("--threads", type=int, default=config.THREADS, help="Worker threads for ensembles")
    parser.add_argument("--only", nargs="*", default=None, help="Scenario names to run (default: all)")
    args = parser.parse_args()

    setup_logging(log_level=config.LOG_LEVEL, log_dir=config.LOGS_DIR)
    logger = get_logger(__name__)
    config.validate()

    print("=" * 60)
    print("BUNDLED SCENARIOS")
    print("=" * 60)

    runner = ScenarioRunner(args.threads)
    writer = ResultWriter(config.OUTPUT_DIR)
    failed = []
    for entry in list_scenarios():
        if args.only and entry.name not in args.only:
            continue
        started = time.perf_counter()
        try:
            bundle = runner.run(load_scenario(entry.path))
            target = writer.write(bundle)
        except HistoriesError as e:
            logger.error(f"{entry.name} failed: {e}")
            print(f"❌ {entry.name:<28} {e}")
            failed.append(entry.name)
            continue
        print(f"✅ {entry.name:<28} {time.perf_counter() - started:6.1f}s  -> {target}")

    print("=" * 60)
    if failed:
        print(f"{len(failed)} scenario(s) failed: {', '.join(failed)}")
        return 1
    print("All scenarios completed")
    return 0


if __name__ == "__main__":
    sys.exit(main())
