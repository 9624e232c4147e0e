import argparse

from dusss.services import verify_service

from .common import EXIT_FAILURE, EXIT_OK


def verify(args: argparse.Namespace) -> int:
    results = verify_service.run(args.filter)
    if not results:
        return EXIT_FAILURE
    print(verify_service.table(results))
    return EXIT_OK if all(r.passed for r in results) else EXIT_FAILURE


def register(subparsers, common: argparse.ArgumentParser) -> None:
    parser = subparsers.add_parser("verify", parents=[common], help="gradient, identity and property checks")
    parser.add_argument("--filter", help="run only checks whose name contains this text")
    parser.set_defaults(handler=verify)
