from __future__ import annotations

import itertools
import logging
from pathlib import Path
from typing import Dict, List, Optional, Tuple

import numpy as np
from tqdm import tqdm

from config.config import ModelSettings, RunConfig
from dusss.app.data.splits import split_labeled
from dusss.app.metrics import evaluate
from dusss.app.nets import SegNetwork, VisionLanguageModel
from dusss.app.seeding import derive_rng
from dusss.app.tensor import Adam, functional as F, no_grad, precision
from dusss.app.training import TeacherStudent, train_step
from dusss.errors import ConfigError, DatasetError, NonFiniteLossError
from dusss.models import EvalResult, Sample, SemiSummary, Split, StepWeights, TgStage, Vocabulary
from dusss.repository import metrics_repo_ins
from dusss.services.data_service import data_service
from dusss.services.model_factory import build_seg, load_vlm, save_segmenter

logger = logging.getLogger(__name__)


class SemiSegService:
    """Step 2: text-guided teacher-student segmentation with early stopping"""

    def columns(self, text: bool, tg: bool) -> List[str]:
        cols = ["epoch", "l_sup", "l_semi"]
        if text:
            cols += ["l_semi_merged", "l_semi_text"]
        if tg:
            cols.append("l_tg")
        return cols + ["val_dice", "val_miou"]

    def step_weights(self, cfg: RunConfig, use_text: bool) -> StepWeights:
        return StepWeights(
            w_semi=cfg.semi.w_semi if cfg.semi.use_unlabeled else 0.0,
            w_tg=cfg.semi.w_tg,
            use_text=use_text,
            merge_mode=cfg.semi.merge_mode,
            tg_in_step=cfg.semi.tg_stage in (TgStage.BOTH, TgStage.SEGMENT),
            student_noise=cfg.semi.student_noise,
        )

    def predict(self, net: SegNetwork, images: np.ndarray, batch_size: int = 32) -> np.ndarray:
        """Probability maps (N, H, W)"""
        out = []
        with no_grad():
            for start in range(0, len(images), batch_size):
                out.append(F.sigmoid(net(images[start : start + batch_size])).data)
        return np.concatenate(out) if out else np.zeros((0,) + images.shape[1:])

    def validate(self, net: SegNetwork, samples: List[Sample]) -> EvalResult:
        if not samples:
            raise DatasetError("validation split is empty")
        probs = self.predict(net, np.stack([s.image for s in samples]))
        return evaluate([s.id for s in samples], probs, [s.mask for s in samples])

    def _load_vlm(
        self, cfg: RunConfig, use_text: bool, vocab: Vocabulary
    ) -> Tuple[Optional[VisionLanguageModel], ModelSettings]:
        """Frozen VLM plus the model settings the run must use; the checkpoint's settings win"""
        if not use_text:
            return None, cfg.model
        if not cfg.paths.vlm_checkpoint:
            raise ConfigError(["paths.vlm_checkpoint: required unless the text pathway is disabled (--no-text)"])
        vlm, model, vlm_vocab, _ = load_vlm(cfg.paths.vlm_checkpoint)
        if vlm_vocab.tokens != vocab.tokens:
            raise DatasetError("train-semi: dataset vocabulary differs from the VLM checkpoint vocabulary")
        if model.model_dump() != cfg.model.model_dump():
            changed = sorted(k for k, v in model.model_dump().items() if cfg.model.model_dump().get(k) != v)
            logger.warning(
                "model settings %s taken from %s instead of the run configuration", changed, cfg.paths.vlm_checkpoint
            )
        vlm.requires_grad_(False)
        if cfg.semi.finetune_grounding:
            vlm.grounding.requires_grad_(True)
        return vlm, model

    def train_loop(self, cfg: RunConfig, progress: bool = True) -> SemiSummary:
        grouped, vocab = data_service.load(cfg.paths.data_dir)
        use_text = cfg.semi.use_text
        pool = grouped[Split.LABELED]
        if not pool:
            raise DatasetError(f"train-semi: no training samples in {cfg.paths.data_dir}")
        labeled, unlabeled = split_labeled(pool, cfg.semi.labeled_frac, cfg.seed)
        unlabeled = (unlabeled + grouped[Split.UNLABELED]) if cfg.semi.use_unlabeled else []
        val = grouped[Split.VAL]
        logger.info("train-semi: %d labeled, %d unlabeled, %d val", len(labeled), len(unlabeled), len(val))

        run_dir = Path(cfg.paths.run_dir)
        weights = self.step_weights(cfg, use_text)
        tg_column = use_text and weights.tg_in_step and weights.w_tg > 0.0
        columns = self.columns(use_text, tg_column)

        vlm, model = self._load_vlm(cfg, use_text, vocab)
        with precision(model.dtype):
            student = build_seg(model, cfg.seed)
            ts = TeacherStudent(student, alpha=cfg.semi.alpha)
            names = [f"student.{n}" for n, _ in student.named_parameters()]
            params = student.parameters()
            finetune = bool(vlm is not None and cfg.semi.finetune_grounding and tg_column)
            if finetune:
                names += [f"grounding.{n}" for n, _ in vlm.grounding.named_parameters()]
                params += vlm.grounding.parameters()
            optimizer = Adam(params, lr=cfg.semi.lr, names=names)
            rng = derive_rng(cfg.seed, "train_semi")
            l_max = model.l_max
            text_vocab = vocab if use_text else None

            rows: List[Dict[str, float]] = []
            best: Optional[Dict[str, float]] = None
            best_path = run_dir / "seg.json"
            stale = 0
            epoch = 0
            bar = tqdm(range(1, cfg.semi.epochs + 1), desc="train-semi", disable=not progress)
            for epoch in bar:
                u_batches = (
                    itertools.cycle(list(data_service.batches(unlabeled, cfg.semi.unlabeled_batch_size, rng)))
                    if unlabeled
                    else None
                )
                sums: Dict[str, List[float]] = {}
                for chunk in data_service.batches(labeled, cfg.semi.batch_size, rng):
                    l_batch = data_service.make_batch(chunk, text_vocab, l_max)
                    u_batch = data_service.make_batch(next(u_batches), text_vocab, l_max) if u_batches else None
                    try:
                        report = train_step(l_batch, u_batch, ts, optimizer, vlm, weights, rng, finetune)
                    except NonFiniteLossError as exc:
                        metrics_repo_ins.dump_nonfinite(run_dir / "nonfinite_dump.npz", exc.stats)
                        raise
                    for key, value in report.model_dump().items():
                        if value is not None:
                            sums.setdefault(key, []).append(value)

                result = self.validate(ts.student, val)
                row = {key: float(np.mean(values)) for key, values in sums.items()}
                row.update({"epoch": epoch, "val_dice": result.dice, "val_miou": result.miou})
                rows.append(row)
                bar.set_postfix(val_dice=f"{result.dice:.4f}")
                logger.info(
                    "train-semi epoch %d: %s", epoch, " ".join(f"{c}={row.get(c)}" for c in columns if c != "epoch")
                )

                if best is None or result.dice > best["val_dice"]:
                    best = row
                    stale = 0
                    save_segmenter(
                        best_path,
                        ts.student,
                        model,
                        cfg.seed,
                        vlm=vlm,
                        vocab=vocab if vlm is not None else None,
                        extra={"epoch": epoch, "val_dice": result.dice, "use_text": use_text},
                    )
                else:
                    stale += 1
                    if stale >= cfg.semi.patience:
                        logger.info("early stop at epoch %d (best %d)", epoch, int(best["epoch"]))
                        break

        csv_path = metrics_repo_ins.write_rows(run_dir / "semi_metrics.csv", columns, rows)
        return SemiSummary(
            checkpoint=str(best_path),
            metrics_csv=str(csv_path),
            epochs_run=epoch,
            best_epoch=int(best["epoch"]),
            best_val_dice=best["val_dice"],
            best_val_miou=best["val_miou"],
            stopped_early=epoch < cfg.semi.epochs,
        )


# Singleton instance
semiseg_service = SemiSegService()
