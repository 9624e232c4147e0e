"""Options shared by every subcommand and the config they resolve to"""

import argparse
import logging
import sys
from typing import Any, Dict, Optional

from config.config import RunConfig, load_run_config, parse_override

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_USAGE = 2

LOG_FORMAT = "%(asctime)s %(levelname)s %(name)s: %(message)s"


def logging_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(add_help=False)
    parser.add_argument("--log-level", default="INFO", choices=["DEBUG", "INFO", "WARNING", "ERROR"])
    parser.add_argument("--quiet", action="store_true", help="no progress bars")
    return parser


def common_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(add_help=False, parents=[logging_parser()])
    parser.add_argument("--config", help="run config: JSON with dotted keys, or YAML")
    parser.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE", help="override one config key (repeatable)")
    parser.add_argument("--data-dir")
    parser.add_argument("--run-dir")
    parser.add_argument("--vlm-checkpoint")
    parser.add_argument("--seed", type=int)
    parser.add_argument("--sss-a", type=float, help="uncertainty scale a")
    parser.add_argument("--sss-b", type=float, help="uncertainty offset b")
    parser.add_argument("--sss-lambda", type=float, help="constraint degree lambda")
    return parser


def configure_logging(level: str) -> None:
    logging.basicConfig(level=getattr(logging, level), format=LOG_FORMAT, stream=sys.stderr, force=True)


def show_progress(args: argparse.Namespace) -> bool:
    return not args.quiet and sys.stderr.isatty()


def run_config(args: argparse.Namespace, extra: Optional[Dict[str, Any]] = None) -> RunConfig:
    """Config file, then --set items, then dedicated flags"""
    overrides: Dict[str, Any] = {}
    for item in args.overrides:
        overrides.update(parse_override(item))
    flags = {
        "paths.data_dir": args.data_dir,
        "paths.run_dir": args.run_dir,
        "paths.vlm_checkpoint": args.vlm_checkpoint,
        "seed": args.seed,
        "sss.a": args.sss_a,
        "sss.b": args.sss_b,
        "sss.lambda": args.sss_lambda,
    }
    flags.update(extra or {})
    overrides.update({k: v for k, v in flags.items() if v is not None})
    return load_run_config(args.config, overrides)
