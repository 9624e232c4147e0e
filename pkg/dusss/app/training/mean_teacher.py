"""
Teacher-student segmentation with EMA teacher updates and text-guided
pseudo-label fusion.
"""

from __future__ import annotations

import hashlib
import logging
from typing import Dict, Optional

import numpy as np

from dusss.app.losses import (
    mask_pooled_features,
    merge_pseudo,
    semi_losses,
    sup_loss,
    text_mask_probs,
    tg_loss,
)
from dusss.app.nets import SegNetwork, VisionLanguageModel
from dusss.app.tensor import Adam, Tensor, functional as F, no_grad
from dusss.errors import DatasetError, NonFiniteLossError, ShapeError
from dusss.models import Batch, LossReport, PseudoLabel, PseudoLabelSource, StepWeights

logger = logging.getLogger(__name__)


class TeacherStudent:
    """Student trained by the optimizer; teacher follows it by EMA only"""

    def __init__(self, student: SegNetwork, alpha: float = 0.99, teacher: Optional[SegNetwork] = None):
        if not 0.0 <= alpha <= 1.0:
            raise ValueError(f"EMA alpha must lie in [0, 1], got {alpha}")
        self.student = student
        self.teacher = teacher if teacher is not None else student.clone()
        self.teacher.requires_grad_(False)
        self.alpha = alpha

    def teacher_checksum(self) -> str:
        digest = hashlib.sha256()
        for name, p in self.teacher.named_parameters():
            digest.update(name.encode())
            digest.update(np.ascontiguousarray(p.data).tobytes())
        return digest.hexdigest()


def ema_update(ts: TeacherStudent, alpha: Optional[float] = None) -> SegNetwork:
    """theta_t <- alpha * theta_t + (1 - alpha) * theta_s, parameter by parameter"""
    alpha = ts.alpha if alpha is None else alpha
    if not 0.0 <= alpha <= 1.0:
        raise ValueError(f"EMA alpha must lie in [0, 1], got {alpha}")
    teacher = dict(ts.teacher.named_parameters())
    student = dict(ts.student.named_parameters())
    if teacher.keys() != student.keys():
        raise ShapeError(f"ema_update: teacher and student parameter names differ: {sorted(teacher.keys() ^ student.keys())}")
    for name, t in teacher.items():
        s = student[name]
        if s.shape != t.shape:
            raise ShapeError(f"ema_update: {name} is {t.shape} in the teacher but {s.shape} in the student")
        if alpha == 1.0:
            continue
        if alpha == 0.0:
            t.data = s.data.astype(t.dtype, copy=True)
        else:
            t.data = (alpha * t.data + (1.0 - alpha) * s.data).astype(t.dtype, copy=False)
    return ts.teacher


def _stats(tensors: Dict[str, Tensor]) -> Dict[str, np.ndarray]:
    return {name: np.asarray(t.data if isinstance(t, Tensor) else t) for name, t in tensors.items()}


def _check_finite(losses: Dict[str, Tensor], context: Dict[str, Tensor]) -> None:
    bad = [name for name, value in losses.items() if not np.all(np.isfinite(value.data))]
    if bad:
        raise NonFiniteLossError(f"train_step: non-finite loss in {', '.join(bad)}", stats=_stats({**losses, **context}))


def text_guided_maps(vlm: VisionLanguageModel, batch: Batch, track: bool) -> tuple:
    """(v_f, t_f, y_text probs); gradients flow only when `track` and the grounding decoder is trainable"""
    if batch.tokens is None:
        raise DatasetError("text-guided mask needs tokenized captions")
    if track:
        v_f, t_f = vlm.pixel_and_text_features(batch.images, batch.tokens)
        return v_f, t_f, text_mask_probs(v_f, t_f)
    with no_grad():
        v_f, t_f = vlm.pixel_and_text_features(batch.images, batch.tokens)
        return v_f, t_f, text_mask_probs(v_f, t_f)


def train_step(
    labeled: Batch,
    unlabeled: Optional[Batch],
    ts: TeacherStudent,
    optimizer: Adam,
    vlm: Optional[VisionLanguageModel],
    weights: StepWeights,
    rng: np.random.Generator,
    finetune_grounding: bool = False,
) -> LossReport:
    """
    One optimizer step on the student (and the grounding decoder when
    fine-tuned) followed by one EMA update of the teacher.

    total = l_sup + w_semi * l_semi + w_tg * l_tg
    """
    if len(labeled) == 0:
        raise DatasetError("train_step: empty labeled batch")
    if labeled.masks is None:
        raise DatasetError("train_step: labeled batch carries no masks")
    use_unlabeled = unlabeled is not None and len(unlabeled) > 0 and weights.w_semi > 0.0
    use_text = weights.use_text and vlm is not None

    optimizer.zero_grad()
    y_l = F.sigmoid(ts.student(labeled.images))
    losses: Dict[str, Tensor] = {"l_sup": sup_loss(y_l, labeled.masks)}
    context: Dict[str, Tensor] = {"y_l": y_l}

    text_batch = None
    if use_unlabeled:
        # teacher sees the clean image, the student a photometrically perturbed one
        noisy = unlabeled.images + rng.normal(0.0, weights.student_noise, size=unlabeled.images.shape)
        y_s = F.sigmoid(ts.student(np.clip(noisy, 0.0, 1.0)))
        with no_grad():
            y_t = F.sigmoid(ts.teacher(unlabeled.images))
        teacher_label = PseudoLabel(map=y_t.data.copy(), source=PseudoLabelSource.TEACHER)
        context.update({"y_s": y_s, "y_t": y_t})

        if use_text:
            v_f, t_f, y_text = text_guided_maps(vlm, unlabeled, track=finetune_grounding and weights.tg_in_step)
            text_label = PseudoLabel(map=y_text.data.copy(), source=PseudoLabelSource.TEXT)
            merged = merge_pseudo(teacher_label, text_label, weights.merge_mode)
            losses.update(semi_losses(y_s, merged, text_label))
            context["y_text"] = y_text
            text_batch = (v_f, t_f, y_s)
        else:
            losses.update(semi_losses(y_s, teacher_label, None))

    if use_text and weights.tg_in_step and weights.w_tg > 0.0:
        if text_batch is None or text_batch[0].shape[0] < 2:
            if len(labeled) >= 2 and labeled.tokens is not None:
                v_f, t_f, _ = text_guided_maps(vlm, labeled, track=finetune_grounding)
                text_batch = (v_f, t_f, y_l)
        if text_batch is not None and text_batch[0].shape[0] >= 2:
            # pixel features pooled under the student's own prediction
            v_f, t_f, y_student = text_batch
            losses["l_tg"] = tg_loss(mask_pooled_features(v_f, y_student), t_f, vlm.temperature())

    total = losses["l_sup"]
    if "l_semi" in losses:
        total = total + F.scale(losses["l_semi"], weights.w_semi)
    if "l_tg" in losses:
        total = total + F.scale(losses["l_tg"], weights.w_tg)
    losses["total"] = total

    _check_finite(losses, context)
    total.backward()
    if finetune_grounding and vlm is not None:
        # grounding parameters outside this step's graph take a zero gradient
        for p in vlm.grounding.parameters():
            if p.grad is None:
                p.grad = np.zeros_like(p.data)
    optimizer.step()
    ema_update(ts)

    report = LossReport(
        l_sup=losses["l_sup"].item(),
        l_semi_merged=losses["l_semi_merged"].item() if "l_semi_merged" in losses else None,
        l_semi_text=losses["l_semi_text"].item() if "l_semi_text" in losses else None,
        l_semi=losses["l_semi"].item() if "l_semi" in losses else 0.0,
        l_tg=losses["l_tg"].item() if "l_tg" in losses else None,
        total=total.item(),
    )
    logger.debug("train_step %s", report.model_dump())
    return report
