"""
Step 1: uncertainty-aware vision-language pretraining.

L = L_cmc + L_imc + w_tg * L_tg, with every contrastive score matrix
modulated by the semantic similarity supervision unless it is switched off.
"""

from __future__ import annotations

import logging
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from dusss.app.losses import (
    cmc_loss,
    imc_loss,
    mask_pooled_features,
    pairwise_scores,
    text_mask_probs,
    tg_loss,
)
from dusss.app.nets import Parameter, VisionLanguageModel
from dusss.app.tensor import Adam, Tensor, functional as F
from dusss.errors import DatasetError, NonFiniteLossError
from dusss.models import Batch, PretrainReport, SSSConfig

logger = logging.getLogger(__name__)


def trainable_parameters(vlm: VisionLanguageModel, use_sss: bool, w_tg: float) -> Tuple[List[str], List[Parameter]]:
    """Names and parameters that receive gradients under the given switches"""
    skip = []
    if not use_sss:
        skip += ["image_gaussian.", "text_gaussian."]
    if w_tg <= 0.0:
        skip.append("grounding.")
    named = [(n, p) for n, p in vlm.named_parameters() if not any(n.startswith(s) for s in skip)]
    return [n for n, _ in named], [p for _, p in named]


def retrieval_top1(sim: np.ndarray, texts: Sequence[str]) -> Tuple[float, float]:
    """
    In-batch top-1 accuracy in both directions.

    Captions repeat in the synthetic grammar, so retrieving any item whose
    caption equals the anchor's caption counts as a hit.
    """
    texts = np.asarray(list(texts))
    i2t = float(np.mean(texts[np.argmax(sim, axis=1)] == texts))
    t2i = float(np.mean(texts[np.argmax(sim, axis=0)] == texts))
    return i2t, t2i


def pretrain_losses(
    vlm: VisionLanguageModel,
    view1: Batch,
    view2: Optional[Batch],
    sss: SSSConfig,
    use_sss: bool = True,
    use_imc: bool = True,
    w_tg: float = 0.0,
) -> Tuple[Dict[str, Tensor], np.ndarray]:
    """Loss tensors of one batch plus the raw image-text cosine matrix for retrieval"""
    if len(view1) < 2:
        raise DatasetError(f"pretrain: a batch needs at least 2 pairs, got {len(view1)}")
    if view1.tokens is None:
        raise DatasetError("pretrain: batch carries no tokenized captions")
    tau = vlm.temperature()

    first = vlm.encode(view1.images, view1.tokens, gaussians=use_sss)
    i2t = pairwise_scores(
        first.image.semantic, first.text.semantic, first.image_gaussian, first.text_gaussian, sss, use_sss
    )
    losses: Dict[str, Tensor] = {"l_cmc": cmc_loss(i2t.sim_hat, i2t.sim_hat.T, tau)}

    if use_imc:
        if view2 is None or view2.tokens is None or len(view2) != len(view1):
            raise ValueError("pretrain: intra-modal loss needs an augmented view of every pair")
        second = vlm.encode(view2.images, view2.tokens, gaussians=use_sss)
        i2i = pairwise_scores(
            first.image.semantic, second.image.semantic, first.image_gaussian, second.image_gaussian, sss, use_sss
        )
        t2t = pairwise_scores(
            first.text.semantic, second.text.semantic, first.text_gaussian, second.text_gaussian, sss, use_sss
        )
        losses["l_imc"] = imc_loss(i2i, t2t, tau)

    if w_tg > 0.0:
        v_f = vlm.grounding(first.image.patch_grid)
        y_text = text_mask_probs(v_f, first.text.t_f)
        losses["l_tg"] = tg_loss(mask_pooled_features(v_f, y_text), first.text.t_f, tau)

    total = losses["l_cmc"]
    if "l_imc" in losses:
        total = total + losses["l_imc"]
    if "l_tg" in losses:
        total = total + F.scale(losses["l_tg"], w_tg)
    losses["total"] = total
    return losses, i2t.sim.data.copy()


def pretrain_step(
    vlm: VisionLanguageModel,
    optimizer: Adam,
    view1: Batch,
    view2: Optional[Batch],
    sss: SSSConfig,
    use_sss: bool = True,
    use_imc: bool = True,
    w_tg: float = 0.0,
) -> Tuple[PretrainReport, np.ndarray]:
    optimizer.zero_grad()
    losses, sim = pretrain_losses(vlm, view1, view2, sss, use_sss, use_imc, w_tg)
    bad = [name for name, value in losses.items() if not np.all(np.isfinite(value.data))]
    if bad:
        raise NonFiniteLossError(
            f"pretrain_step: non-finite loss in {', '.join(bad)}",
            stats={**{k: v.data for k, v in losses.items()}, "sim": sim},
        )
    losses["total"].backward()
    optimizer.step()
    report = PretrainReport(
        l_cmc=losses["l_cmc"].item(),
        l_imc=losses["l_imc"].item() if "l_imc" in losses else None,
        l_tg=losses["l_tg"].item() if "l_tg" in losses else None,
        total=losses["total"].item(),
    )
    return report, sim
