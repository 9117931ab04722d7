# run_scenario.py
# ----------------
# Command line entry point: runs one scenario file, or every scenario in a folder.
#
# Functionality:
# - Loads and validates the scenario (load_configurations)
# - Applies the --seed / --threads overrides
# - Runs the scenario command through analysis_framework.Manager
#
# Output:
# - <out>/report.json, one CSV per table, <out>/timings.json
# - exit code 0 (ok), 2 (a checked property failed), 1 (input error, JSON error object on stderr)
import argparse
import json
import logging
import os
import sys

from analysis_framework import EXIT_INPUT_ERROR, EXIT_OK, Manager, default_models
from load_configurations import load_configurations, load_scenario

logger = logging.getLogger(__name__)


def parse_args(argv=None) -> argparse.Namespace:
    parser = argparse.ArgumentParser(description="Run harmonic analysis scenarios on discrete measures.")
    source = parser.add_mutually_exclusive_group(required=True)
    source.add_argument("--scenario", help="scenario file (YAML or JSON)")
    source.add_argument("--all", metavar="FOLDER", help="run every scenario in a folder")
    parser.add_argument("--out", help="output directory (default: the scenario's output.dir)")
    parser.add_argument("--threads", type=int, help="worker threads; results do not depend on it")
    parser.add_argument("--seed", type=int, help="override the scenario seed")
    parser.add_argument("--log-level", default="WARNING", choices=["DEBUG", "INFO", "WARNING", "ERROR"])
    return parser.parse_args(argv)


def _apply_overrides(settings: dict, args: argparse.Namespace) -> dict:
    if args.threads is not None:
        if args.threads < 1:
            raise ValueError(f"--threads must be >= 1, got {args.threads}.")
        settings["threads"] = args.threads
    if args.seed is not None:
        if args.seed < 0:
            raise ValueError(f"--seed must be >= 0, got {args.seed}.")
        settings["seed"] = args.seed
    return settings


def run(argv=None) -> int:
    args = parse_args(argv)
    logging.basicConfig(level=args.log_level, stream=sys.stderr,
                        format="%(asctime)s %(name)s %(levelname)s %(message)s")
    models = default_models()
    try:
        if args.scenario:
            settings = _apply_overrides(load_scenario(args.scenario), args)
            return Manager(models, settings).run_analysis(args.out)

        worst = EXIT_OK
        for key, settings in load_configurations(args.all).items():
            settings = _apply_overrides(settings, args)
            out_dir = os.path.join(args.out, key.replace(" ", "_")) if args.out else None
            worst = max(worst, Manager(models, settings).run_analysis(out_dir))
        return worst
    except (ValueError, KeyError, OSError, RuntimeError) as e:
        logger.debug("scenario failed", exc_info=True)
        sys.stderr.write(json.dumps({"error": type(e).__name__, "message": str(e)}) + "\n")
        return EXIT_INPUT_ERROR


if __name__ == "__main__":
    sys.exit(run())
