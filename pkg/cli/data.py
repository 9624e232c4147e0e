import argparse

from pydantic import BaseModel, Field, ValidationError, field_validator

from dusss.errors import ConfigError
from dusss.services import data_service

from .common import EXIT_OK, logging_parser


class GenDataRequest(BaseModel):
    count: int = Field(ge=8)
    seed: int
    size: int = 32
    out: str

    @field_validator("size")
    @classmethod
    def _size(cls, value: int) -> int:
        if value < 16 or value % 8:
            raise ValueError(f"size must be a multiple of 8 and >= 16, got {value}")
        return value


def gen_data(args: argparse.Namespace) -> int:
    try:
        request = GenDataRequest(count=args.count, seed=args.seed, size=args.size, out=args.out)
    except ValidationError as exc:
        raise ConfigError([f"{'.'.join(map(str, e['loc']))}: {e['msg']}" for e in exc.errors()]) from None
    path = data_service.generate(request.out, request.count, request.seed, request.size)
    print(path)
    return EXIT_OK


def register(subparsers, common: argparse.ArgumentParser) -> None:
    parser = subparsers.add_parser("gen-data", parents=[logging_parser()], help="write a synthetic lesion dataset")
    parser.add_argument("--count", type=int, required=True)
    parser.add_argument("--seed", type=int, required=True)
    parser.add_argument("--size", type=int, default=32)
    parser.add_argument("--out", required=True)
    parser.set_defaults(handler=gen_data)
