"""
Segmentation objectives: supervised and soft-target cross-entropy, the
text-guided mask and the fusion of teacher and text pseudo-labels.
"""

from __future__ import annotations

from typing import Dict, Optional, Union

import numpy as np

from dusss.app.tensor import Tensor, functional as F
from dusss.errors import DomainError, ShapeError
from dusss.models import MergeMode, PseudoLabel, PseudoLabelSource

# probabilities are clamped to [PROB_EPS, 1 - PROB_EPS] before any log
PROB_EPS = 1e-7

Target = Union[Tensor, np.ndarray, PseudoLabel]


def _target(value: Target, like: Tensor) -> Tensor:
    """Targets never carry gradient"""
    if isinstance(value, PseudoLabel):
        value = value.map
    if isinstance(value, Tensor):
        return value.detach()
    return F.as_tensor(np.asarray(value), like=like)


def binary_cross_entropy(probs: Tensor, target: Target, eps: float = PROB_EPS) -> Tensor:
    """Pixel-averaged cross-entropy against a (possibly soft) target map"""
    t = _target(target, probs)
    if t.shape != probs.shape:
        raise ShapeError(f"cross-entropy: prediction {probs.shape} vs target {t.shape}")
    p = F.clamp(probs, lo=eps, hi=1.0 - eps)
    return -(t * F.log(p) + (1.0 - t) * F.log(1.0 - p)).mean()


def sup_loss(y_l: Tensor, y_gt: Union[Tensor, np.ndarray]) -> Tensor:
    gt = y_gt.data if isinstance(y_gt, Tensor) else np.asarray(y_gt)
    if gt.shape != y_l.shape:
        raise ShapeError(f"sup_loss: prediction {y_l.shape} vs mask {gt.shape}")
    if not np.all((gt == 0) | (gt == 1)):
        raise DomainError("sup_loss: ground-truth mask must be binary")
    return binary_cross_entropy(y_l, gt)


def text_mask_probs(v_f: Tensor, t_f: Tensor) -> Tensor:
    """sigmoid(t_f . v_f[:, :, y, x]) for pixel features (N, d, H, W) and text vectors (N, d)"""
    if v_f.ndim != 4 or t_f.ndim != 2 or v_f.shape[:2] != t_f.shape:
        raise ShapeError(f"text_mask: pixel features {v_f.shape} vs text features {t_f.shape}")
    n, d, h, w = v_f.shape
    logits = (v_f * t_f.reshape(n, d, 1, 1)).sum(axis=1)
    return F.sigmoid(logits)


def text_mask(v_f: Tensor, t_f: Tensor) -> PseudoLabel:
    return PseudoLabel(map=text_mask_probs(v_f, t_f).data.copy(), source=PseudoLabelSource.TEXT)


def _logit(p: np.ndarray, eps: float = PROB_EPS) -> np.ndarray:
    p = np.clip(p, eps, 1.0 - eps)
    return np.log(p) - np.log1p(-p)


def _sigmoid(x: np.ndarray) -> np.ndarray:
    return np.exp(-np.logaddexp(0.0, -x))


def merge_pseudo(y_t: PseudoLabel, y_text: PseudoLabel, mode: MergeMode = MergeMode.LITERAL) -> PseudoLabel:
    """
    Fuse the teacher map with the text-guided mask.

    The literal rule sums the two probability maps under a sigmoid, so the
    result lies in [0.5, sigmoid(2)]; the logit rule sums log-odds instead.
    """
    if y_t.map.shape != y_text.map.shape:
        raise ShapeError(f"merge_pseudo: teacher {y_t.map.shape} vs text {y_text.map.shape}")
    if MergeMode(mode) is MergeMode.LOGIT:
        merged = _sigmoid(_logit(y_t.map) + _logit(y_text.map))
    else:
        merged = _sigmoid(y_t.map + y_text.map)
    return PseudoLabel(map=merged, source=PseudoLabelSource.MERGED)


def semi_losses(y_s: Tensor, merged: Optional[PseudoLabel], y_text: Optional[PseudoLabel]) -> Dict[str, Tensor]:
    """
    Unlabeled-branch losses.

    With both targets, l_semi is the mean of the merged and text terms. Without
    the text pathway (`y_text` None) `merged` holds the plain teacher map and
    l_semi is its single cross-entropy term.
    """
    if merged is None:
        raise ValueError("semi_losses: a teacher or merged target is required")
    l_merged = binary_cross_entropy(y_s, merged)
    if y_text is None:
        return {"l_semi_merged": l_merged, "l_semi": l_merged}
    l_text = binary_cross_entropy(y_s, y_text)
    return {
        "l_semi_merged": l_merged,
        "l_semi_text": l_text,
        "l_semi": F.scale(l_merged + l_text, 0.5),
    }
