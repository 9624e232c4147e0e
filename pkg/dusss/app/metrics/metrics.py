"""
Binary overlap metrics.

Probabilities at or above 0.5 count as foreground. When prediction and ground
truth are both empty, Dice and IoU are 1.
"""

from __future__ import annotations

from typing import Iterable, Sequence, Tuple

import numpy as np

from dusss.errors import ShapeError
from dusss.models import EvalResult, SampleScore

THRESHOLD = 0.5


def binarize(values: np.ndarray, threshold: float = THRESHOLD) -> np.ndarray:
    return np.asarray(values) >= threshold


def _pair(pred: np.ndarray, gt: np.ndarray, op: str) -> Tuple[np.ndarray, np.ndarray]:
    pred, gt = np.asarray(pred), np.asarray(gt)
    if pred.shape != gt.shape:
        raise ShapeError(f"{op}: prediction {pred.shape} vs ground truth {gt.shape}")
    return binarize(pred), binarize(gt)


def dice(pred: np.ndarray, gt: np.ndarray) -> float:
    p, y = _pair(pred, gt, "dice")
    total = int(p.sum()) + int(y.sum())
    if total == 0:
        return 1.0
    return 2.0 * int(np.logical_and(p, y).sum()) / total


def miou(pred: np.ndarray, gt: np.ndarray) -> float:
    p, y = _pair(pred, gt, "miou")
    union = int(np.logical_or(p, y).sum())
    if union == 0:
        return 1.0
    return int(np.logical_and(p, y).sum()) / union


def evaluate(ids: Sequence[str], preds: Iterable[np.ndarray], gts: Iterable[np.ndarray]) -> EvalResult:
    """Per-sample scores and their means; `preds` may hold probabilities"""
    scores = [SampleScore(id=i, dice=dice(p, g), iou=miou(p, g)) for i, p, g in zip(ids, preds, gts)]
    if len(scores) != len(ids):
        raise ShapeError(f"evaluate: {len(ids)} ids but {len(scores)} prediction/ground-truth pairs")
    if not scores:
        return EvalResult(dice=0.0, miou=0.0, per_sample=[])
    return EvalResult(
        dice=float(np.mean([s.dice for s in scores])),
        miou=float(np.mean([s.iou for s in scores])),
        per_sample=scores,
    )
