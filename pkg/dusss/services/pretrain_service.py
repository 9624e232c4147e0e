from __future__ import annotations

import logging
from pathlib import Path
from typing import Dict, List

import numpy as np
from tqdm import tqdm

from config.config import RunConfig
from dusss.app.seeding import derive_rng
from dusss.app.tensor import Adam, no_grad, precision
from dusss.app.training import pretrain_losses, pretrain_step, retrieval_top1, trainable_parameters
from dusss.errors import DatasetError, NonFiniteLossError
from dusss.models import PretrainSummary, Sample, Split, TgStage, Vocabulary
from dusss.repository import metrics_repo_ins
from dusss.services.data_service import data_service
from dusss.services.model_factory import build_vlm, save_vlm

logger = logging.getLogger(__name__)

PRETRAIN_COLUMNS = ["step", "epoch", "l_cmc", "l_imc", "l_tg", "total", "tau", "retrieval_i2t", "retrieval_t2i"]


class PretrainService:
    """Step 1: trains encoders, Gaussian heads, grounding decoder and temperature"""

    def effective_w_tg(self, cfg: RunConfig) -> float:
        return cfg.pretrain.w_tg if cfg.semi.tg_stage in (TgStage.BOTH, TgStage.PRETRAIN) else 0.0

    def training_pairs(self, cfg: RunConfig) -> tuple[List[Sample], Vocabulary]:
        grouped, vocab = data_service.load(cfg.paths.data_dir)
        pairs = grouped[Split.LABELED] + grouped[Split.UNLABELED]
        if len(pairs) < 2:
            raise DatasetError(f"pretrain: {cfg.paths.data_dir} holds {len(pairs)} training pairs, need at least 2")
        return sorted(pairs, key=lambda s: s.id), vocab

    def run(self, cfg: RunConfig, dry_run: bool = False, progress: bool = True) -> PretrainSummary:
        pairs, vocab = self.training_pairs(cfg)
        if dry_run:
            logger.info("dry run: configuration and dataset valid (%d pairs); not training", len(pairs))
            return PretrainSummary()

        run_dir = Path(cfg.paths.run_dir)
        w_tg = self.effective_w_tg(cfg)
        use_sss, use_imc = cfg.contrastive.use_sss, cfg.contrastive.use_imc
        l_max = cfg.model.l_max

        with precision(cfg.model.dtype):
            vlm = build_vlm(cfg.model, vocab, cfg.seed)
            names, params = trainable_parameters(vlm, use_sss, w_tg)
            optimizer = Adam(params, lr=cfg.pretrain.lr, names=names)
            rng = derive_rng(cfg.seed, "pretrain")

            rows: List[Dict[str, float]] = []
            epoch_l_cmc: List[float] = []
            step = 0
            bar = tqdm(range(1, cfg.pretrain.epochs + 1), desc="pretrain", disable=not progress)
            for epoch in bar:
                cmc = []
                for chunk in data_service.batches(pairs, cfg.pretrain.batch_size, rng, min_size=2):
                    view1 = data_service.make_batch(chunk, vocab, l_max)
                    view2 = data_service.augmented_batch(chunk, vocab, l_max, cfg.augment, rng) if use_imc else None
                    try:
                        report, sim = pretrain_step(vlm, optimizer, view1, view2, cfg.sss, use_sss, use_imc, w_tg)
                    except NonFiniteLossError as exc:
                        metrics_repo_ins.dump_nonfinite(run_dir / "nonfinite_dump.npz", exc.stats)
                        raise
                    step += 1
                    i2t, t2i = retrieval_top1(sim, view1.texts)
                    rows.append(
                        {
                            "step": step,
                            "epoch": epoch,
                            "l_cmc": report.l_cmc,
                            "l_imc": report.l_imc,
                            "l_tg": report.l_tg,
                            "total": report.total,
                            "tau": vlm.temperature.value,
                            "retrieval_i2t": i2t,
                            "retrieval_t2i": t2i,
                        }
                    )
                    cmc.append(report.l_cmc)
                epoch_l_cmc.append(float(np.mean(cmc)))
                bar.set_postfix(l_cmc=f"{epoch_l_cmc[-1]:.4f}")
                logger.info("pretrain epoch %d: l_cmc=%.6f tau=%.4f", epoch, epoch_l_cmc[-1], vlm.temperature.value)

            i2t, t2i = self.retrieval(cfg, vlm, pairs, vocab)

        csv_path = metrics_repo_ins.write_rows(run_dir / "pretrain_metrics.csv", PRETRAIN_COLUMNS, rows)
        ckpt = save_vlm(run_dir / "vlm.json", vlm, cfg.model, vocab, cfg.seed)
        logger.info(
            "pretraining done: l_cmc %.4f -> %.4f, retrieval i2t=%.3f t2i=%.3f",
            epoch_l_cmc[0],
            epoch_l_cmc[-1],
            i2t,
            t2i,
        )
        return PretrainSummary(
            checkpoint=str(ckpt),
            metrics_csv=str(csv_path),
            epochs=cfg.pretrain.epochs,
            first_epoch_l_cmc=epoch_l_cmc[0],
            last_epoch_l_cmc=epoch_l_cmc[-1],
            retrieval_i2t=i2t,
            retrieval_t2i=t2i,
        )

    def retrieval(self, cfg: RunConfig, vlm, pairs: List[Sample], vocab: Vocabulary) -> tuple[float, float]:
        """Mean in-batch top-1 over unshuffled training batches"""
        hits_i2t, hits_t2i, total = 0.0, 0.0, 0
        with no_grad():
            for chunk in data_service.batches(pairs, cfg.pretrain.batch_size, None, min_size=2):
                batch = data_service.make_batch(chunk, vocab, cfg.model.l_max)
                _, sim = pretrain_losses(vlm, batch, None, cfg.sss, use_sss=False, use_imc=False)
                i2t, t2i = retrieval_top1(sim, batch.texts)
                hits_i2t += i2t * len(batch)
                hits_t2i += t2i * len(batch)
                total += len(batch)
        return hits_i2t / total, hits_t2i / total


# Singleton instance
pretrain_service = PretrainService()
