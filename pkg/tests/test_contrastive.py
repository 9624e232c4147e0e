import math

import numpy as np
import pytest

from dusss.app.losses import cmc_loss, imc_loss, info_nce, mask_pooled_features, tg_loss
from dusss.app.losses.uncertainty import pairwise_scores
from dusss.app.nets import Temperature
from dusss.app.tensor import Tensor
from dusss.errors import DomainError, ShapeError
from dusss.models import SSSConfig


class TestInfoNCE:
    @pytest.mark.parametrize("n", [2, 5, 16])
    def test_uniform_scores_give_log_n(self, n):
        assert info_nce(Tensor(np.full((n, n), 0.4)), 0.07).item() == pytest.approx(math.log(n))

    def test_sharp_diagonal_is_nearly_free(self):
        scores = Tensor(np.eye(4) * 2.0 - 1.0)
        assert info_nce(scores, 0.05).item() < 1e-6

    def test_hard_negatives_cost_more(self):
        easy = Tensor(np.eye(3))
        hard = Tensor(np.eye(3) + np.fliplr(np.eye(3)) * 0.9)
        assert info_nce(hard, 0.1).item() > info_nce(easy, 0.1).item()

    def test_two_pairs_by_hand(self):
        expected = -math.log(math.exp(2.0) / (math.exp(2.0) + 1.0))
        assert info_nce(Tensor(np.eye(2)), 0.5).item() == pytest.approx(expected, abs=1e-9)
        assert expected == pytest.approx(0.126928, abs=1e-6)

    def test_lowering_an_off_diagonal_score_lowers_the_loss(self, rng):
        scores = rng.uniform(-1, 1, (4, 4))
        base = info_nce(Tensor(scores), 0.2).item()
        for i, j in [(0, 1), (2, 3), (3, 0)]:
            lowered = scores.copy()
            lowered[i, j] -= 0.1
            assert info_nce(Tensor(lowered), 0.2).item() < base

    def test_accepts_pairwise_scores_and_temperature_module(self, rng):
        scores = pairwise_scores(
            Tensor(rng.normal(size=(3, 4))), Tensor(rng.normal(size=(3, 4))), None, None, SSSConfig(), use_sss=False
        )
        value = info_nce(scores, Temperature(0.5)).item()
        assert value == pytest.approx(info_nce(scores.sim, 0.5).item())

    def test_needs_a_negative(self):
        with pytest.raises(ShapeError):
            info_nce(Tensor(np.ones((1, 1))), 0.1)

    def test_square_only(self):
        with pytest.raises(ShapeError):
            info_nce(Tensor(np.ones((2, 3))), 0.1)

    def test_non_finite_scores(self):
        with pytest.raises(DomainError):
            info_nce(Tensor(np.array([[1.0, np.nan], [0.0, 1.0]])), 0.1)

    def test_non_positive_temperature(self):
        with pytest.raises(ValueError):
            info_nce(Tensor(np.eye(2)), 0.0)

    def test_gradient_reaches_temperature(self, rng):
        tau = Temperature(0.2)
        info_nce(Tensor(rng.uniform(-1, 1, (4, 4))), tau).backward()
        assert tau.log_tau.grad is not None


class TestCombinedLosses:
    def test_cmc_averages_directions(self, rng):
        a, b = Tensor(rng.uniform(-1, 1, (4, 4))), Tensor(rng.uniform(-1, 1, (4, 4)))
        expected = 0.5 * (info_nce(a, 0.1).item() + info_nce(b, 0.1).item())
        assert cmc_loss(a, b, 0.1).item() == pytest.approx(expected)

    def test_cmc_shape_mismatch(self):
        with pytest.raises(ShapeError):
            cmc_loss(Tensor(np.eye(2)), Tensor(np.eye(3)), 0.1)

    def test_imc_needs_both_views(self):
        with pytest.raises(ValueError):
            imc_loss(Tensor(np.eye(3)), None, 0.1)

    def test_tg_loss_is_symmetric_in_its_pairs(self, rng):
        v, t = Tensor(rng.normal(size=(4, 5))), Tensor(rng.normal(size=(4, 5)))
        assert tg_loss(v, t, 0.3).item() == pytest.approx(tg_loss(t, v, 0.3).item())

    def test_tg_loss_aligned_pairs_are_nearly_free(self):
        assert tg_loss(Tensor(np.eye(2)), Tensor(np.eye(2)), 0.07).item() < 0.01

    def test_tg_loss_uniform_is_log_two(self):
        v = Tensor(np.ones((2, 3)))
        assert tg_loss(v, Tensor(np.ones((2, 3))), 0.07).item() == pytest.approx(math.log(2.0))

    def test_tg_loss_shape_mismatch(self, rng):
        with pytest.raises(ShapeError):
            tg_loss(Tensor(rng.normal(size=(4, 5))), Tensor(rng.normal(size=(4, 6))), 0.3)


class TestMaskPooling:
    def test_weighted_average(self):
        v_f = Tensor(np.arange(8.0).reshape(1, 2, 2, 2))
        weights = np.array([[[1.0, 0.0], [0.0, 1.0]]])
        np.testing.assert_allclose(mask_pooled_features(v_f, weights).data, [[1.5, 5.5]])

    def test_empty_mask_pools_to_zero(self, rng):
        v_f = Tensor(rng.normal(size=(2, 3, 4, 4)))
        np.testing.assert_array_equal(mask_pooled_features(v_f, np.zeros((2, 4, 4))).data, 0.0)

    def test_shape_mismatch(self, rng):
        with pytest.raises(ShapeError):
            mask_pooled_features(Tensor(rng.normal(size=(2, 3, 4, 4))), np.zeros((2, 3, 3)))
