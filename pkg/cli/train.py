import argparse
import json

from dusss.services import ablation_service, pretrain_service, semiseg_service
from dusss.services.ablation_service import VARIANTS

from .common import EXIT_FAILURE, EXIT_OK, run_config, show_progress


def pretrain(args: argparse.Namespace) -> int:
    cfg = run_config(args)
    summary = pretrain_service.run(cfg, dry_run=args.dry_run, progress=show_progress(args))
    if not args.dry_run:
        print(summary.model_dump_json(indent=2))
    return EXIT_OK


def train_semi(args: argparse.Namespace) -> int:
    extra = {"semi.labeled_frac": args.labeled_frac}
    if args.no_text:
        extra["semi.use_text"] = False
    cfg = run_config(args, extra)
    summary = semiseg_service.train_loop(cfg, progress=show_progress(args))
    print(summary.model_dump_json(indent=2))
    return EXIT_OK


def ablate(args: argparse.Namespace) -> int:
    cfg = run_config(args)
    summary = ablation_service.run(
        cfg,
        seeds=args.seeds or (0, 1, 2),
        variants=args.variants or tuple(VARIANTS),
        progress=show_progress(args),
    )
    print(json.dumps(summary.model_dump(), indent=2))
    if args.strict and not (summary.full_beats_baseline and summary.full_dominates_variants):
        return EXIT_FAILURE
    return EXIT_OK


def register(subparsers, common: argparse.ArgumentParser) -> None:
    parser = subparsers.add_parser("pretrain", parents=[common], help="Step 1: uncertainty-aware VLM pretraining")
    parser.add_argument("--dry-run", action="store_true", help="validate config and dataset, then exit")
    parser.set_defaults(handler=pretrain)

    parser = subparsers.add_parser("train-semi", parents=[common], help="Step 2: text-guided Mean-Teacher segmentation")
    parser.add_argument("--no-text", action="store_true", help="plain Mean-Teacher without the text pathway")
    parser.add_argument("--labeled-frac", type=float, choices=[0.25, 0.5, 1.0])
    parser.set_defaults(handler=train_semi)

    parser = subparsers.add_parser("ablate", parents=[common], help="variant grid over seeds; writes ablation.csv")
    parser.add_argument("--seeds", type=int, nargs="+")
    parser.add_argument("--variants", nargs="+", choices=sorted(VARIANTS))
    parser.add_argument("--strict", action="store_true", help="exit 1 when the directional checks fail")
    parser.set_defaults(handler=ablate)
