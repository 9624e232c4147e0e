"""
Command-line entry point. Each command group registers its subparsers here,
and this module alone maps exceptions to exit codes.
"""

import argparse
import logging
from typing import List, Optional

from dusss.errors import ConfigError, DusssError

from . import data, evaluate, train, verify
from .common import EXIT_FAILURE, EXIT_USAGE, common_parser, configure_logging

logger = logging.getLogger("dusss.cli")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="dusss", description="uncertainty-aware VLM pretraining and text-guided semi-supervised segmentation")
    subparsers = parser.add_subparsers(dest="command", required=True)
    common = common_parser()
    for group in (data, train, evaluate, verify):
        group.register(subparsers, common)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    configure_logging(args.log_level)

    try:
        return args.handler(args)
    except ConfigError as exc:
        logger.error("%s", exc)
        return EXIT_USAGE
    except (DusssError, OSError) as exc:
        logger.error("%s: %s", args.command, exc)
        return EXIT_FAILURE


__all__ = ["build_parser", "main"]
