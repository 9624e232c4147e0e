"""
InfoNCE-style contrastive objectives.

Row i of a score matrix is anchor i; column i is its positive and every other
column a negative. Scores are divided by the learnable temperature before the
softmax cross-entropy.
"""

from __future__ import annotations

from typing import Optional, Union

import numpy as np

from dusss.app.losses.uncertainty import cosine_similarity_matrix
from dusss.app.nets.temperature import Temperature
from dusss.app.tensor import Tensor, functional as F
from dusss.errors import DomainError, ShapeError
from dusss.models import PairwiseScores

Scores = Union[Tensor, PairwiseScores]
Tau = Union[Temperature, Tensor, float]


def _tau(tau: Tau) -> Union[Tensor, float]:
    if isinstance(tau, Temperature):
        return tau()
    if isinstance(tau, Tensor):
        return tau
    tau = float(tau)
    if not tau > 0.0:
        raise ValueError(f"temperature must be positive, got {tau}")
    return tau


def _matrix(scores: Scores) -> Tensor:
    return scores.sim_hat if isinstance(scores, PairwiseScores) else scores


def info_nce(scores: Scores, tau: Tau) -> Tensor:
    """Mean over anchors of -log(exp(s_ii / tau) / sum_j exp(s_ij / tau))"""
    matrix = _matrix(scores)
    if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1]:
        raise ShapeError(f"info_nce: expected a square score matrix, got {matrix.shape}")
    if matrix.shape[0] < 2:
        raise ShapeError("info_nce: a batch needs at least one negative (N >= 2)")
    if not np.all(np.isfinite(matrix.data)):
        raise DomainError("info_nce: non-finite similarity")

    logits = matrix / _tau(tau)
    eye = F.as_tensor(np.eye(matrix.shape[0]), like=matrix)
    positives = (logits * eye).sum(axis=1)
    return (F.logsumexp(logits, axis=1) - positives).mean()


def cmc_loss(scores_i2t: Scores, scores_t2i: Scores, tau: Tau) -> Tensor:
    """Cross-modal term: average of the image->text and text->image directions"""
    a, b = _matrix(scores_i2t), _matrix(scores_t2i)
    if a.shape != b.shape:
        raise ShapeError(f"cmc_loss: direction shapes {a.shape} and {b.shape} differ")
    return F.scale(info_nce(a, tau) + info_nce(b, tau), 0.5)


def imc_loss(scores_i2i: Optional[Scores], scores_t2t: Optional[Scores], tau: Tau) -> Tensor:
    """Intra-modal term over two augmented views per modality"""
    if scores_i2i is None or scores_t2t is None:
        raise ValueError("imc_loss: both the image and text augmented views are required")
    a, b = _matrix(scores_i2i), _matrix(scores_t2t)
    if a.shape != b.shape:
        raise ShapeError(f"imc_loss: modality shapes {a.shape} and {b.shape} differ")
    return F.scale(info_nce(a, tau) + info_nce(b, tau), 0.5)


def tg_loss(v_f_t: Tensor, t_f: Tensor, tau: Tau) -> Tensor:
    """Symmetric InfoNCE between mask-pooled visual features and pooled text features"""
    if v_f_t.shape != t_f.shape:
        raise ShapeError(f"tg_loss: pooled features {v_f_t.shape} vs text features {t_f.shape}")
    sim = cosine_similarity_matrix(v_f_t, t_f)
    return F.scale(info_nce(sim, tau) + info_nce(sim.T, tau), 0.5)


def mask_pooled_features(v_f: Tensor, weights: Union[Tensor, np.ndarray], eps: float = 1e-6) -> Tensor:
    """
    Average of pixel features (N, d, H, W) under a soft mask (N, H, W).

    An all-zero mask pools to the zero vector.
    """
    w = weights if isinstance(weights, Tensor) else F.as_tensor(weights, like=v_f)
    if v_f.ndim != 4 or w.shape != (v_f.shape[0], v_f.shape[2], v_f.shape[3]):
        raise ShapeError(f"mask pooling: features {v_f.shape} vs mask {w.shape}")
    n, _, h, wd = v_f.shape
    w4 = w.reshape(n, 1, h, wd)
    total = F.clamp(w4.sum(axis=(2, 3)), lo=eps)
    return (v_f * w4).sum(axis=(2, 3)) / total
