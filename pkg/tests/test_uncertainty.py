import math

import numpy as np
import pytest

from dusss.app.losses import uncertainty
from dusss.app.tensor import Tensor
from dusss.errors import ShapeError
from dusss.models import GaussianEmbedding, SSSConfig


def gaussians(rng, n, d, sigma=(0.5, 1.5)):
    return GaussianEmbedding(mu=Tensor(rng.normal(size=(n, d))), sigma=Tensor(rng.uniform(*sigma, size=(n, d))))


class TestSemanticDistance:
    def test_euclidean(self):
        assert uncertainty.semantic_distance([0.0, 0.0], [3.0, 4.0]).item() == pytest.approx(5.0)

    def test_identical_embeddings(self):
        assert uncertainty.semantic_distance([1.0, 2.0], [1.0, 2.0]).item() == 0.0

    def test_length_mismatch(self):
        with pytest.raises(ShapeError):
            uncertainty.semantic_distance([1.0, 2.0], [1.0, 2.0, 3.0])


class TestWasserstein:
    def test_diagonal_closed_form(self):
        g1 = GaussianEmbedding(mu=np.array([0.0, 0.0]), sigma=np.array([1.0, 1.0]))
        g2 = GaussianEmbedding(mu=np.array([1.0, 2.0]), sigma=np.array([2.0, 1.0]))
        assert uncertainty.wasserstein2_sq(g1, g2).item() == pytest.approx(1.0 + 4.0 + 1.0)

    def test_symmetric(self, rng):
        g = gaussians(rng, 2, 5)
        a = GaussianEmbedding(mu=g.mu[0], sigma=g.sigma[0])
        b = GaussianEmbedding(mu=g.mu[1], sigma=g.sigma[1])
        assert uncertainty.wasserstein2_sq(a, b).item() == pytest.approx(uncertainty.wasserstein2_sq(b, a).item())


class TestModulation:
    def test_no_uncertainty_keeps_similarity(self):
        cfg = SSSConfig(a=1.0, b=0.0, lam=1.0)
        d_u = uncertainty.uncertainty_level(0.0, cfg)
        factor = uncertainty.sss_factor(uncertainty.relative_uncertainty(d_u, 0.8), cfg)
        assert uncertainty.uncertain_sim(0.3, factor).item() == pytest.approx(0.3)

    def test_uncertain_pair_moves_towards_one(self):
        cfg = SSSConfig()
        low = uncertainty.scalar_sim_hat(0.2, 1.0, 0.1, cfg)
        high = uncertainty.scalar_sim_hat(0.2, 1.0, 3.0, cfg)
        assert 0.2 < low < high < 1.0

    def test_never_exceeds_one(self, rng):
        sim = rng.uniform(-1.0, 1.0, 200)
        factor = rng.uniform(0.0, 1.0, 200)
        assert np.all(uncertainty.uncertain_sim(sim, factor).numpy() <= 1.0)

    def test_zero_semantic_distance_is_floored(self):
        rel = uncertainty.relative_uncertainty(1.0, 0.0)
        assert math.isfinite(rel.item())
        assert uncertainty.sss_factor(rel, SSSConfig()).item() == 0.0

    def test_lambda_alias(self):
        assert SSSConfig.model_validate({"lambda": 2.5}).lam == 2.5


class TestPairwiseScores:
    def test_matrices_agree_with_scalar_recomputation(self, rng):
        cfg = SSSConfig(a=1.5, b=0.1, lam=0.7)
        sa, sb = Tensor(rng.normal(size=(4, 6))), Tensor(rng.normal(size=(4, 6)))
        scores = uncertainty.pairwise_scores(sa, sb, gaussians(rng, 4, 3), gaussians(rng, 4, 3), cfg)
        assert scores.sim_hat.shape == (4, 4)
        for i, j in [(0, 0), (1, 3), (3, 2)]:
            expected = uncertainty.scalar_sim_hat(
                float(scores.sim.data[i, j]), float(scores.d_s.data[i, j]), float(scores.d_2w.data[i, j]), cfg
            )
            assert scores.sim_hat.data[i, j] == pytest.approx(expected, abs=1e-12)

    def test_cosine_range(self, rng):
        scores = uncertainty.pairwise_scores(
            Tensor(rng.normal(size=(5, 3))), Tensor(rng.normal(size=(5, 3))), None, None, SSSConfig(), use_sss=False
        )
        assert np.all(np.abs(scores.sim.data) <= 1.0 + 1e-12)
        np.testing.assert_array_equal(scores.sim_hat.data, scores.sim.data)
        np.testing.assert_array_equal(scores.d_2w.data, 0.0)

    def test_disabled_modulation_still_reports_distances(self, rng):
        scores = uncertainty.pairwise_scores(
            Tensor(rng.normal(size=(3, 4))),
            Tensor(rng.normal(size=(3, 4))),
            gaussians(rng, 3, 2),
            gaussians(rng, 3, 2),
            SSSConfig(),
            use_sss=False,
        )
        np.testing.assert_array_equal(scores.sim_hat.data, scores.sim.data)
        assert np.all(scores.d_2w.data > 0)

    def test_gaussians_required_when_enabled(self, rng):
        with pytest.raises(ValueError):
            uncertainty.pairwise_scores(
                Tensor(rng.normal(size=(3, 4))), Tensor(rng.normal(size=(3, 4))), None, None, SSSConfig()
            )

    def test_needs_two_pairs(self, rng):
        with pytest.raises(ShapeError):
            uncertainty.pairwise_scores(
                Tensor(rng.normal(size=(1, 4))), Tensor(rng.normal(size=(1, 4))), None, None, SSSConfig(), use_sss=False
            )

    def test_batch_mismatch(self, rng):
        with pytest.raises(ShapeError):
            uncertainty.pairwise_scores(
                Tensor(rng.normal(size=(3, 4))), Tensor(rng.normal(size=(2, 4))), None, None, SSSConfig(), use_sss=False
            )
