"""
Entrypoint for MarketSense runs.
Usage: python main.py <command> --config run.json [--seed N] [--samples N]
                      [--strategies all|A,B] [--as-of YYYY-MM] [--universe T1,T2|file.json]

Exit status: 0 ok, 1 errors recorded in the manifest, 2 usage or config
error, 3 nothing to report, 70 crash.
"""

import argparse
import sys

from constants import EXIT_CRASH, EXIT_FAILURES, EXIT_NOTHING_TO_REPORT, EXIT_OK, EXIT_USAGE
from errors import ConfigurationError, NothingToReportError
from marketsense import COMMANDS, MarketSensePipeline
from runconfig import load_run_config
from utils.logging_setup import logger


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="marketsense", description="LLM stock-signal pipeline and evaluation.")
    parser.add_argument("command", choices=COMMANDS + ("run-all",))
    parser.add_argument("--config", required=True, help="run config JSON")
    parser.add_argument("--seed", type=int, help="master seed override")
    parser.add_argument("--samples", type=int, help="bootstrap sample count override")
    parser.add_argument("--strategies", help="'all' or comma-separated strategy names/labels")
    parser.add_argument("--as-of", dest="as_of", help="process only this month (YYYY-MM)")
    parser.add_argument("--universe", help="comma-separated tickers or a .json ticker list")
    return parser


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as e:
        return EXIT_OK if e.code == 0 else EXIT_USAGE

    try:
        config = load_run_config(args.config).with_overrides(
            seed=args.seed, samples=args.samples, strategies=args.strategies, universe=args.universe,
        )
        pipeline = MarketSensePipeline(config, as_of=args.as_of)
        manifest = pipeline.run(args.command)
    except ConfigurationError as e:
        logger.error("Configuration error: %s", e)
        return EXIT_USAGE
    except NothingToReportError as e:
        logger.error("%s", e)
        return EXIT_NOTHING_TO_REPORT
    except Exception as e:
        logger.exception("❌ %s crashed: %s", args.command, e)
        return EXIT_CRASH

    return EXIT_OK if manifest.ok else EXIT_FAILURES


if __name__ == "__main__":
    sys.exit(main())
