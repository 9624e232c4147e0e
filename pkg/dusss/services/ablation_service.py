"""
Directional ablation: the full method against the no-text Mean-Teacher
baseline and single-component removals, averaged over seeds.
"""

from __future__ import annotations

import logging
from pathlib import Path
from typing import Any, Dict, List, Sequence

import numpy as np

from config.config import RunConfig, unflatten
from dusss.models import AblationSummary
from dusss.repository import metrics_repo_ins
from dusss.services.pretrain_service import pretrain_service
from dusss.services.semiseg_service import semiseg_service

logger = logging.getLogger(__name__)

# overrides per variant; "pretrain" says whether Step 1 runs
VARIANTS: Dict[str, Dict[str, Any]] = {
    "baseline": {"pretrain": False, "overrides": {"semi.use_text": False}},
    "full": {"pretrain": True, "overrides": {}},
    "no_sss": {"pretrain": True, "overrides": {"contrastive.use_sss": False}},
    "no_dcl": {"pretrain": True, "overrides": {"contrastive.use_imc": False}},
    "no_tg": {"pretrain": True, "overrides": {"pretrain.w_tg": 0.0, "semi.w_tg": 0.0}},
}
MIN_MARGIN = 0.02


class AblationService:
    def variant_config(self, cfg: RunConfig, variant: str, seed: int, run_root: Path) -> RunConfig:
        flat = cfg.flat()
        flat.update(VARIANTS[variant]["overrides"])
        flat.update({"seed": seed, "paths.run_dir": str(run_root / variant / f"seed{seed}")})
        return RunConfig(**unflatten(flat))

    def run(self, cfg: RunConfig, seeds: Sequence[int] = (0, 1, 2), variants: Sequence[str] = tuple(VARIANTS), progress: bool = True) -> AblationSummary:
        unknown = [v for v in variants if v not in VARIANTS]
        if unknown:
            raise ValueError(f"ablate: unknown variant(s) {unknown}; expected {sorted(VARIANTS)}")
        run_root = Path(cfg.paths.run_dir)
        rows: List[Dict[str, Any]] = []
        for seed in seeds:
            for variant in variants:
                vcfg = self.variant_config(cfg, variant, seed, run_root)
                if VARIANTS[variant]["pretrain"]:
                    summary = pretrain_service.run(vcfg, progress=progress)
                    vcfg.paths.vlm_checkpoint = summary.checkpoint
                result = semiseg_service.train_loop(vcfg, progress=progress)
                logger.info("ablate %s seed %d: val_dice=%.4f", variant, seed, result.best_val_dice)
                rows.append({"variant": variant, "seed": seed, "val_dice": result.best_val_dice, "val_miou": result.best_val_miou})

        means = {v: float(np.mean([r["val_dice"] for r in rows if r["variant"] == v])) for v in variants}
        for v in variants:
            rows.append(
                {
                    "variant": v,
                    "seed": "MEAN",
                    "val_dice": means[v],
                    "val_miou": float(np.mean([r["val_miou"] for r in rows if r["variant"] == v and r["seed"] != "MEAN"])),
                }
            )
        csv_path = metrics_repo_ins.write_rows(run_root / "ablation.csv", ["variant", "seed", "val_dice", "val_miou"], rows)

        margin = means.get("full", float("nan")) - means.get("baseline", float("nan"))
        removed = [v for v in variants if v not in ("full", "baseline")]
        dominates = "full" in means and all(means["full"] >= means[v] for v in removed)
        summary = AblationSummary(
            csv=str(csv_path),
            means=means,
            margin_over_baseline=margin,
            full_beats_baseline=bool(margin >= MIN_MARGIN),
            full_dominates_variants=bool(dominates),
        )
        logger.info(
            "ablation: full - baseline = %.4f Dice (%s); full >= removals: %s",
            margin,
            "ok" if summary.full_beats_baseline else "below 0.02",
            summary.full_dominates_variants,
        )
        return summary


# Singleton instance
ablation_service = AblationService()
