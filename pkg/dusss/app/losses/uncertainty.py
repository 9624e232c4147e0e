"""
Semantic similarity supervision.

The uncertainty level between two samples is the squared 2-Wasserstein distance
between their [CLS] Gaussians, scaled and offset; dividing by the semantic
(Euclidean) distance gives the relative uncertainty, and exp(-lambda * ratio)
modulates cosine similarity towards 1 for uncertain pairs.

Every function accepts tensors (batched along leading axes) or plain arrays.
"""

from __future__ import annotations

from typing import Any, Optional

import numpy as np

from dusss.app.tensor import Tensor, functional as F
from dusss.errors import ShapeError
from dusss.models import GaussianEmbedding, PairwiseScores, SSSConfig

# floor on the semantic distance in the relative-uncertainty ratio
DS_FLOOR = 1e-8
# floor on embedding norms before cosine similarity
NORM_FLOOR = 1e-12


def _t(value: Any) -> Tensor:
    return value if isinstance(value, Tensor) else F.as_tensor(np.asarray(value, dtype=float))


def semantic_distance(s1: Any, s2: Any) -> Tensor:
    """||s1 - s2||_2 along the last axis"""
    s1, s2 = _t(s1), _t(s2)
    if s1.shape[-1] != s2.shape[-1]:
        raise ShapeError(f"semantic_distance: embedding lengths {s1.shape[-1]} and {s2.shape[-1]} differ")
    return F.l2_norm(s1 - s2, axis=-1)


def wasserstein2_sq(g1: GaussianEmbedding, g2: GaussianEmbedding) -> Tensor:
    """||mu1 - mu2||^2 + ||sigma1 - sigma2||^2 for diagonal Gaussians"""
    mu1, mu2, sd1, sd2 = _t(g1.mu), _t(g2.mu), _t(g1.sigma), _t(g2.sigma)
    if mu1.shape[-1] != mu2.shape[-1] or sd1.shape[-1] != sd2.shape[-1]:
        raise ShapeError(f"wasserstein2_sq: dimensions {mu1.shape} vs {mu2.shape} differ")
    d_mu = mu1 - mu2
    d_sd = sd1 - sd2
    return (d_mu * d_mu).sum(axis=-1) + (d_sd * d_sd).sum(axis=-1)


def uncertainty_level(d2w: Any, cfg: SSSConfig) -> Tensor:
    return _t(d2w) * cfg.a + cfg.b


def relative_uncertainty(d_u: Any, d_s: Any, eps: float = DS_FLOOR) -> Tensor:
    return _t(d_u) / F.clamp(_t(d_s), lo=eps)


def sss_factor(rel_u: Any, cfg: SSSConfig) -> Tensor:
    return F.exp(F.scale(_t(rel_u), -cfg.lam))


def uncertain_sim(sim: Any, d_sss: Any) -> Tensor:
    """1 - (1 - sim) * D_SSS; never exceeds 1"""
    return 1.0 - (1.0 - _t(sim)) * _t(d_sss)


def cosine_similarity_matrix(x: Tensor, y: Tensor, eps: float = NORM_FLOOR) -> Tensor:
    """(N, d) x (M, d) -> (N, M) cosine similarities of L2-normalized rows"""
    return F.normalize(x, axis=-1, eps=eps) @ F.normalize(y, axis=-1, eps=eps).T


def pairwise_semantic_distance(x: Tensor, y: Tensor) -> Tensor:
    n, d = x.shape
    m = y.shape[0]
    return semantic_distance(x.reshape(n, 1, d), y.reshape(1, m, d))


def pairwise_wasserstein2_sq(g1: GaussianEmbedding, g2: GaussianEmbedding) -> Tensor:
    n, d = g1.mu.shape
    m = g2.mu.shape[0]
    return wasserstein2_sq(
        GaussianEmbedding(mu=g1.mu.reshape(n, 1, d), sigma=g1.sigma.reshape(n, 1, d)),
        GaussianEmbedding(mu=g2.mu.reshape(1, m, d), sigma=g2.sigma.reshape(1, m, d)),
    )


def pairwise_scores(
    semantic_a: Tensor,
    semantic_b: Tensor,
    gaussian_a: Optional[GaussianEmbedding],
    gaussian_b: Optional[GaussianEmbedding],
    cfg: SSSConfig,
    use_sss: bool = True,
) -> PairwiseScores:
    """
    All N x N matrices for anchors `a` against candidates `b`.

    With `use_sss=False` the modulation is skipped (sim_hat = sim) and the
    distance matrices are still reported when Gaussians are given.
    """
    n = semantic_a.shape[0]
    if semantic_b.shape[0] != n:
        raise ShapeError(f"pairwise_scores: batch sizes {n} and {semantic_b.shape[0]} differ")
    if n < 2:
        raise ShapeError(f"pairwise_scores: need at least 2 pairs, got {n}")

    sim = cosine_similarity_matrix(semantic_a, semantic_b)
    d_s = pairwise_semantic_distance(semantic_a, semantic_b)
    if gaussian_a is None or gaussian_b is None:
        if use_sss:
            raise ValueError("pairwise_scores: Gaussian embeddings are required when SSS is enabled")
        zeros = F.as_tensor(np.zeros((n, n)), like=sim)
        return PairwiseScores(sim=sim, d_s=d_s, d_2w=zeros, sim_hat=sim)
    if gaussian_a.mu.shape[0] != n or gaussian_b.mu.shape[0] != n:
        raise ShapeError("pairwise_scores: Gaussian batch does not match the semantic batch")

    d_2w = pairwise_wasserstein2_sq(gaussian_a, gaussian_b)
    if not use_sss:
        return PairwiseScores(sim=sim, d_s=d_s, d_2w=d_2w, sim_hat=sim)
    d_sss = sss_factor(relative_uncertainty(uncertainty_level(d_2w, cfg), d_s), cfg)
    return PairwiseScores(sim=sim, d_s=d_s, d_2w=d_2w, sim_hat=uncertain_sim(sim, d_sss))


def scalar_sim_hat(sim: float, d_s: float, d_2w: float, cfg: SSSConfig) -> float:
    """Plain-float recomputation of one modulated entry"""
    d_u = cfg.a * d_2w + cfg.b
    rel = d_u / max(d_s, DS_FLOOR)
    return 1.0 - (1.0 - sim) * float(np.exp(-cfg.lam * rel))
