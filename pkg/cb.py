"""Command-line entry point: cb <experiment> [--config FILE] [--out DIR] [--seed N]"""
import argparse
import sys

from config.errors import BranchingError, ConfigError
from config.terminal_logger import terminal_logger
from data.models import MAX_SEED, ExperimentConfig
from data.spec_files import load_experiment
from experiment_runner import EXPERIMENTS, run

EXIT_PASS = 0
EXIT_FAIL = 1
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cb", description="Conditioned CB process limit experiments")
    parser.add_argument("experiment", nargs="?", help="experiment name (see --list)")
    parser.add_argument("--config", help="experiment file (key = value)")
    parser.add_argument("--out", help="output directory (CB_OUTPUT_DIR overrides it)")
    parser.add_argument("--seed", type=int, help="Monte Carlo seed")
    parser.add_argument("--list", action="store_true", help="list experiments and exit")
    return parser


def resolve_config(args: argparse.Namespace) -> ExperimentConfig:
    """Experiment file first, then the command-line overrides; the name may come from either"""
    if args.config:
        config = load_experiment(args.config, experiment=args.experiment)
    elif args.experiment:
        config = ExperimentConfig(experiment=args.experiment)
    else:
        raise ConfigError("an experiment name is required (try --list)")
    overrides = {}
    if args.out is not None:
        overrides["output_dir"] = args.out
    if args.seed is not None:
        if not 0 <= args.seed <= MAX_SEED:
            raise ConfigError(f"seed must lie in [0, 2^64 - 1], got {args.seed}", field="seed")
        overrides["seed"] = args.seed
    return config.model_copy(update=overrides) if overrides else config


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.list:
        for name, experiment in EXPERIMENTS.items():
            print(f"{name:14} {experiment.description}")
        return EXIT_PASS

    try:
        result = run(resolve_config(args))
    except (ConfigError, ValueError) as e:
        terminal_logger.add_log(str(e), "ERROR", "cb")
        print(f"cb: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except BranchingError as e:
        terminal_logger.add_log(f"{type(e).__name__}: {e}", "ERROR", "cb")
        print(f"cb: {type(e).__name__}: {e}", file=sys.stderr)
        return EXIT_NUMERICAL

    print(f"{result.name}: {'PASS' if result.verdict.passed else 'FAIL'}: {result.verdict.summary}")
    for path in result.files:
        print(f"  wrote {path}")
    return result.exit_status


if __name__ == "__main__":
    sys.exit(main())
