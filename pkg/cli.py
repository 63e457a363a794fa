"""
Командная строка: python cli.py {skeleton,sample,rate,ldp,verify} [опции].
"""
import argparse
import json
import logging
import sys
from typing import List, Optional

from pydantic import ValidationError

import settings
from errors import PorousMediaError
from experiment_service import SUBCOMMANDS, experiment_service
from logging_config import setup_logging
from schemas import RunConfig, load_run_config

logger = logging.getLogger(__name__)


def parse_eps_list(value: str) -> List[float]:
    """Разбирает список ε через запятую."""
    try:
        eps_list = [float(item) for item in value.split(",") if item.strip()]
    except ValueError as e:
        raise argparse.ArgumentTypeError(f"Invalid eps list '{value}': {e}") from e
    if not eps_list or any(not 0.0 < eps <= 1.0 for eps in eps_list):
        raise argparse.ArgumentTypeError(f"eps values must lie in (0, 1], got '{value}'")
    return eps_list


def parse_seed(value: str) -> int:
    """Зерно: беззнаковое 64-битное целое."""
    seed = int(value)
    if not 0 <= seed < 2 ** 64:
        raise argparse.ArgumentTypeError(f"Seed must be an unsigned 64-bit integer, got {value}")
    return seed


def build_parser() -> argparse.ArgumentParser:
    """Парсер с подкомандами и общими флагами."""
    parser = argparse.ArgumentParser(
        description="Stochastic porous media equation: skeleton, sampling, rate function, LDP checks."
    )
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="Path to a JSON run configuration")
    common.add_argument("--seed", type=parse_seed, help="Unsigned 64-bit seed")
    common.add_argument("--out", help="Output directory")
    common.add_argument("--trials", type=int, help="Monte Carlo paths per eps")
    common.add_argument("--eps-list", type=parse_eps_list, dest="eps_list",
                        help="Comma-separated eps values, e.g. 0.2,0.1,0.05")

    subparsers = parser.add_subparsers(dest="subcommand", required=True)
    for name in SUBCOMMANDS:
        sub = subparsers.add_parser(name, parents=[common])
        if name == "verify":
            sub.add_argument("--scale", choices=("quick", "full"), default="quick")
            sub.add_argument("--only", nargs="*", help="Run only the named checks")
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    """Точка входа; возвращает код завершения."""
    args = build_parser().parse_args(argv)
    setup_logging(log_dir=settings.LOG_DIR, log_level=settings.LOG_LEVEL)

    try:
        config = load_run_config(args.config) if args.config else RunConfig()
        if args.subcommand == "verify":
            result = experiment_service.run_verify(args.seed, args.out, args.trials,
                                                   args.scale, args.only)
        else:
            result = experiment_service.run(args.subcommand, config, args.seed, args.out,
                                            args.trials, args.eps_list)
    except (ValidationError, PorousMediaError, ValueError, OSError) as e:
        logger.error("Run %s failed: %s", args.subcommand, e)
        return 2

    print(json.dumps(result, indent=2, sort_keys=True))
    if args.subcommand == "verify" and result["summary"]["failed"]:
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
