"""
Main entry point for the cooperative sensing simulator.

Runs Monte-Carlo sweeps comparing the advanced (quantized samples + delays)
and baseline (delays only) fusion designs, or a single trial for debugging.
"""

import argparse
import json
import logging
import logging.handlers
import math
import sys
from typing import Any, Dict, List, NoReturn, Optional, Sequence

from config.config_manager import ConfigManager, SystemConfig
from modules.exceptions import ConfigError
from modules.experiment import SweepCondition, run_sweep, run_trial, write_summary_csv

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_RUNTIME = 2


def setup_logging(system: Optional[SystemConfig] = None) -> None:
    """Configure the logging system with console and (optionally) rotating file handlers."""
    system = system or SystemConfig(log_file="")
    root = logging.getLogger()
    for handler in list(root.handlers):
        root.removeHandler(handler)
        handler.close()
    root.setLevel(logging.DEBUG)

    # Console handler
    console_handler = logging.StreamHandler()
    console_handler.setLevel(system.log_level)
    console_handler.setFormatter(logging.Formatter('%(levelname)s: %(message)s'))
    root.addHandler(console_handler)

    # File handler with rotation
    if system.log_file:
        file_handler = logging.handlers.RotatingFileHandler(
            system.log_file,
            maxBytes=system.log_max_size_mb * 1024 * 1024,
            backupCount=system.log_backup_count
        )
        file_handler.setLevel(logging.DEBUG)
        file_handler.setFormatter(logging.Formatter('%(asctime)s - %(name)s - %(levelname)s - %(message)s'))
        root.addHandler(file_handler)


LIST_OPTIONS = ("--rsnr", "--capacity")


class CommandLineParser(argparse.ArgumentParser):
    """Argument parser whose usage errors are configuration errors."""

    def error(self, message: str) -> NoReturn:
        raise ConfigError(f"{self.prog}: {message}")


def normalize_argv(argv: Sequence[str]) -> List[str]:
    """Join list options with their value so lists such as '-5,0' are not read as flags."""
    normalized: List[str] = []
    tokens = iter(argv)
    for token in tokens:
        if token in LIST_OPTIONS:
            value = next(tokens, None)
            normalized.append(token if value is None else f"{token}={value}")
        else:
            normalized.append(token)
    return normalized


def json_ready(value: Any) -> Any:
    """Replace non-finite floats with 'inf', '-inf' or 'nan' so the output is strict JSON."""
    if isinstance(value, float) and not math.isfinite(value):
        return str(value)
    if isinstance(value, dict):
        return {key: json_ready(item) for key, item in value.items()}
    if isinstance(value, (list, tuple)):
        return [json_ready(item) for item in value]
    return value


def _add_overrides(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="User configuration file (YAML or key=value lines)")
    parser.add_argument("--topology", choices=["circular", "linear"])
    parser.add_argument("--receivers", type=int, dest="n_receivers")
    parser.add_argument("--rsnr", help="Comma-separated RSNR list, dB")
    parser.add_argument("--capacity", help="Comma-separated capacity list in bits, or inf")
    parser.add_argument("--quantizer", choices=["klt", "uniform"])
    parser.add_argument("--design", choices=["advanced", "baseline", "both"])
    parser.add_argument("--trials", type=int)
    parser.add_argument("--seed", type=int, dest="master_seed")


def build_parser() -> argparse.ArgumentParser:
    parser = CommandLineParser(description="Cooperative multistatic sensing with limited backhaul")
    subparsers = parser.add_subparsers(dest="command", required=True)

    sweep = subparsers.add_parser("run-sweep", help="Run a Monte-Carlo sweep and write the summary CSV")
    _add_overrides(sweep)
    sweep.add_argument("--out", required=True, help="Output CSV path")

    trial = subparsers.add_parser("run-trial", help="Run one trial of the first condition and print JSON")
    _add_overrides(trial)
    trial.add_argument("--trial-index", type=int, default=0)
    return parser


def collect_overrides(args: argparse.Namespace) -> Dict[str, Any]:
    """Experiment overrides given on the command line (strings are parsed by the config layer)."""
    keys = ("topology", "n_receivers", "rsnr", "capacity", "quantizer", "design", "trials", "master_seed")
    return {key: getattr(args, key) for key in keys if getattr(args, key, None) is not None}


def main(argv: Optional[List[str]] = None) -> int:
    """Main entry point; returns the process exit code."""
    setup_logging()
    argv = sys.argv[1:] if argv is None else argv

    try:
        args = build_parser().parse_args(normalize_argv(argv))
        config = ConfigManager(config_path=args.config, overrides=collect_overrides(args))
    except ConfigError as e:
        logger.error(f"Configuration error: {e}")
        return EXIT_CONFIG
    setup_logging(config.system)
    if not config.validate():
        return EXIT_CONFIG

    experiment = config.experiment
    try:
        if args.command == "run-sweep":
            rows = run_sweep(experiment, config.processing)
            write_summary_csv(rows, args.out)
        else:
            condition = SweepCondition(experiment.rsnr[0], experiment.capacity[0], experiment.quantizer[0])
            record = run_trial(experiment, condition, args.trial_index)
            print(json.dumps(json_ready(record.to_dict()), indent=2, allow_nan=False))
    except Exception as e:
        logger.error(f"Run failed: {str(e)}", exc_info=True)
        return EXIT_RUNTIME

    return EXIT_OK


if __name__ == '__main__':
    sys.exit(main())
