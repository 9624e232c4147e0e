import argparse
import json

from dusss.errors import ConfigError
from dusss.models import Split
from dusss.services import eval_service, inference_service

from .common import EXIT_OK, run_config


def evaluate(args: argparse.Namespace) -> int:
    cfg = run_config(args)
    split = Split(args.split)
    if bool(args.checkpoint) == bool(args.masks):
        raise ConfigError(["eval: give exactly one of --checkpoint or --masks"])
    if args.checkpoint:
        result, _ = eval_service.evaluate_checkpoint(args.checkpoint, cfg.paths.data_dir, split, args.out)
    else:
        result, _ = eval_service.evaluate_masks(args.masks, cfg.paths.data_dir, split, args.out)
    print(json.dumps({"split": split.value, "dice": result.dice, "miou": result.miou}))
    return EXIT_OK


def infer(args: argparse.Namespace) -> int:
    outputs = inference_service.infer(args.checkpoint, args.image, args.out, args.text)
    print(json.dumps(outputs, indent=2))
    return EXIT_OK


def register(subparsers, common: argparse.ArgumentParser) -> None:
    parser = subparsers.add_parser("eval", parents=[common], help="Dice / IoU of a checkpoint or of predicted masks")
    parser.add_argument("--checkpoint")
    parser.add_argument("--masks", help="directory of <id>.pgm predictions")
    parser.add_argument("--split", default=Split.TEST.value, choices=[s.value for s in Split if s is not Split.UNLABELED])
    parser.add_argument("--out", help="per-sample CSV")
    parser.set_defaults(handler=evaluate)

    parser = subparsers.add_parser("infer", parents=[common], help="mask and text-guided heatmaps for one image")
    parser.add_argument("--checkpoint", required=True)
    parser.add_argument("--image", required=True)
    parser.add_argument("--out", required=True)
    parser.add_argument("--text", action="append", help="caption for a heatmap (repeatable)")
    parser.set_defaults(handler=infer)
