import numpy as np
import pytest

from dusss.app.losses import merge_pseudo, semi_losses, sup_loss, text_mask, text_mask_probs
from dusss.app.losses.segmentation import binary_cross_entropy
from dusss.app.nets import SegNetwork, VisionLanguageModel
from dusss.app.tensor import Adam, Tensor, functional as F
from dusss.app.training import TeacherStudent, ema_update, train_step
from dusss.errors import DatasetError, DomainError, ShapeError
from dusss.models import Batch, MergeMode, PseudoLabel, PseudoLabelSource, StepWeights


def label(value, source=PseudoLabelSource.TEACHER):
    return PseudoLabel(map=np.asarray(value, dtype=float), source=source)


def batch(rng, n, masks=True, tokens=True):
    images = rng.uniform(size=(n, 16, 16))
    return Batch(
        ids=[f"b{i}" for i in range(n)],
        images=images,
        masks=(rng.random((n, 16, 16)) < 0.3).astype(float) if masks else None,
        tokens=np.tile(np.array([1, 3, 4, 5, 0, 0]), (n, 1)) if tokens else None,
        texts=["x"] * n,
    )


@pytest.fixture
def vlm(rng):
    model = VisionLanguageModel(
        image_size=16, patch=4, d=8, d_s=6, d_u=4, vocab_size=8, pad_id=0, l_max=6, rng=rng
    )
    return model.requires_grad_(False)


class TestSupervisedLoss:
    def test_perfect_prediction_is_near_zero(self):
        gt = np.array([[[1.0, 0.0], [0.0, 1.0]]])
        assert sup_loss(Tensor(gt), gt).item() < 1e-6

    def test_non_binary_mask(self):
        with pytest.raises(DomainError):
            sup_loss(Tensor(np.full((1, 2, 2), 0.5)), np.full((1, 2, 2), 0.5))

    def test_shape_mismatch(self):
        with pytest.raises(ShapeError):
            sup_loss(Tensor(np.full((1, 2, 2), 0.5)), np.zeros((1, 3, 3)))

    def test_single_pixel_by_hand(self):
        value = sup_loss(Tensor(np.array([[[0.8]]])), np.array([[[1.0]]])).item()
        assert value == pytest.approx(-np.log(0.8), abs=1e-9)
        assert value == pytest.approx(0.223144, abs=1e-6)

    def test_uniform_prediction_is_log_two(self, rng):
        gt = (rng.random((2, 4, 4)) < 0.5).astype(float)
        assert sup_loss(Tensor(np.full((2, 4, 4), 0.5)), gt).item() == pytest.approx(np.log(2.0))


class TestTextMask:
    def test_probabilities_from_dot_products(self):
        v_f = Tensor(np.stack([np.ones((2, 2)), -np.ones((2, 2))])[None])
        t_f = Tensor(np.array([[1.0, 0.0]]))
        probs = text_mask_probs(v_f, t_f).data
        np.testing.assert_allclose(probs, 1.0 / (1.0 + np.exp(-1.0)))

    def test_pseudo_label_source(self, rng):
        y = text_mask(Tensor(rng.normal(size=(2, 3, 4, 4))), Tensor(rng.normal(size=(2, 3))))
        assert y.source is PseudoLabelSource.TEXT
        assert y.map.shape == (2, 4, 4)

    def test_feature_mismatch(self, rng):
        with pytest.raises(ShapeError):
            text_mask_probs(Tensor(rng.normal(size=(2, 3, 4, 4))), Tensor(rng.normal(size=(2, 4))))

    def test_single_pixel_by_hand(self):
        v_f = Tensor(np.array([2.0, 0.0]).reshape(1, 2, 1, 1))
        probs = text_mask_probs(v_f, Tensor(np.array([[1.0, 0.0]]))).data
        assert probs[0, 0, 0] == pytest.approx(0.880797, abs=1e-6)


class TestMergePseudo:
    def test_literal_rule_range(self, rng):
        merged = merge_pseudo(label(rng.uniform(size=(3, 4, 4))), label(rng.uniform(size=(3, 4, 4)), PseudoLabelSource.TEXT))
        assert merged.source is PseudoLabelSource.MERGED
        assert merged.map.min() >= 0.5
        assert merged.map.max() <= 1.0 / (1.0 + np.exp(-2.0))

    def test_literal_rule_values(self):
        merged = merge_pseudo(label([[0.0, 1.0]]), label([[0.0, 1.0]], PseudoLabelSource.TEXT))
        np.testing.assert_allclose(merged.map, [[0.5, 1.0 / (1.0 + np.exp(-2.0))]])

    def test_logit_rule(self):
        merged = merge_pseudo(label([[0.5, 0.9]]), label([[0.5, 0.5]], PseudoLabelSource.TEXT), MergeMode.LOGIT)
        np.testing.assert_allclose(merged.map, [[0.5, 0.9]], atol=1e-9)

    def test_shape_mismatch(self):
        with pytest.raises(ShapeError):
            merge_pseudo(label(np.zeros((1, 2, 2))), label(np.zeros((1, 3, 3)), PseudoLabelSource.TEXT))


class TestSemiLosses:
    def test_mean_of_both_terms(self, rng):
        y_s = Tensor(rng.uniform(0.1, 0.9, (2, 4, 4)))
        text = label(rng.uniform(size=(2, 4, 4)), PseudoLabelSource.TEXT)
        merged = label(rng.uniform(0.5, 0.8, (2, 4, 4)), PseudoLabelSource.MERGED)
        out = semi_losses(y_s, merged, text)
        assert out["l_semi"].item() == pytest.approx(0.5 * (out["l_semi_merged"].item() + out["l_semi_text"].item()))

    def test_without_text(self, rng):
        y_s = Tensor(rng.uniform(0.1, 0.9, (2, 4, 4)))
        out = semi_losses(y_s, label(rng.uniform(size=(2, 4, 4))), None)
        assert "l_semi_text" not in out
        assert out["l_semi"] is out["l_semi_merged"]

    def test_single_pixel_by_hand(self):
        out = semi_losses(Tensor(np.array([[[0.7]]])), label([[[0.9]]], PseudoLabelSource.MERGED), None)
        expected = -(0.9 * np.log(0.7) + 0.1 * np.log(0.3))
        assert out["l_semi"].item() == pytest.approx(expected, abs=1e-9)
        assert expected == pytest.approx(0.441363, abs=1e-6)

    def test_targets_carry_no_gradient(self, rng):
        z = Tensor(rng.normal(size=(1, 4, 4)), requires_grad=True)
        target = Tensor(rng.uniform(size=(1, 4, 4)), requires_grad=True)
        binary_cross_entropy(F.sigmoid(z), target).backward()
        assert target.grad is None
        assert z.grad is not None


class TestEMA:
    def test_teacher_starts_as_a_frozen_copy(self, rng):
        ts = TeacherStudent(SegNetwork(2, rng))
        for (_, t), (_, s) in zip(ts.teacher.named_parameters(), ts.student.named_parameters()):
            np.testing.assert_array_equal(t.data, s.data)
            assert not t.requires_grad
            assert t is not s

    def test_convex_combination(self, rng):
        ts = TeacherStudent(SegNetwork(2, rng), alpha=0.9, teacher=SegNetwork(2, rng))
        before = {n: p.data.copy() for n, p in ts.teacher.named_parameters()}
        ema_update(ts)
        for name, s in ts.student.named_parameters():
            t = dict(ts.teacher.named_parameters())[name]
            np.testing.assert_allclose(t.data, 0.9 * before[name] + 0.1 * s.data)

    def test_architecture_mismatch(self, rng):
        ts = TeacherStudent(SegNetwork(2, rng), teacher=SegNetwork(3, rng))
        with pytest.raises(ShapeError):
            ema_update(ts)

    def test_alpha_range(self, rng):
        with pytest.raises(ValueError):
            TeacherStudent(SegNetwork(2, rng), alpha=1.5)


class TestTrainStep:
    def optimizer(self, ts):
        return Adam(ts.student.parameters(), lr=1e-3)

    def test_text_guided_step(self, rng, vlm):
        ts = TeacherStudent(SegNetwork(2, rng), alpha=0.5)
        checksum = ts.teacher_checksum()
        report = train_step(batch(rng, 2), batch(rng, 3, masks=False), ts, self.optimizer(ts), vlm, StepWeights(), rng)
        assert report.l_semi_text is not None and report.l_tg is not None
        assert report.l_semi == pytest.approx(0.5 * (report.l_semi_merged + report.l_semi_text))
        assert report.total == pytest.approx(report.l_sup + report.l_semi + 0.1 * report.l_tg)
        assert ts.teacher_checksum() != checksum

    def test_plain_mean_teacher(self, rng):
        ts = TeacherStudent(SegNetwork(2, rng))
        weights = StepWeights(use_text=False)
        report = train_step(batch(rng, 2, tokens=False), batch(rng, 2, masks=False, tokens=False), ts, self.optimizer(ts), None, weights, rng)
        assert report.l_semi_text is None and report.l_tg is None
        assert report.l_semi == pytest.approx(report.l_semi_merged)

    def test_fully_supervised(self, rng, vlm):
        ts = TeacherStudent(SegNetwork(2, rng))
        report = train_step(batch(rng, 2), None, ts, self.optimizer(ts), vlm, StepWeights(), rng)
        assert report.l_semi == 0.0
        # the text-guided loss falls back to the labeled batch
        assert report.l_tg is not None

    def test_frozen_vlm_is_untouched(self, rng, vlm):
        before = vlm.state_dict()
        ts = TeacherStudent(SegNetwork(2, rng))
        train_step(batch(rng, 2), batch(rng, 2, masks=False), ts, self.optimizer(ts), vlm, StepWeights(), rng)
        for name, value in vlm.state_dict().items():
            np.testing.assert_array_equal(value, before[name])

    def test_grounding_finetune_moves_decoder(self, rng, vlm):
        vlm.grounding.requires_grad_(True)
        ts = TeacherStudent(SegNetwork(2, rng))
        before = vlm.grounding.state_dict()
        opt = Adam(ts.student.parameters() + vlm.grounding.parameters(), lr=1e-2)
        train_step(batch(rng, 2), batch(rng, 2, masks=False), ts, opt, vlm, StepWeights(), rng, finetune_grounding=True)
        moved = [n for n, v in vlm.grounding.state_dict().items() if not np.array_equal(v, before[n])]
        assert moved

    def test_labeled_batch_needs_masks(self, rng):
        ts = TeacherStudent(SegNetwork(2, rng))
        with pytest.raises(DatasetError):
            train_step(batch(rng, 2, masks=False), None, ts, self.optimizer(ts), None, StepWeights(use_text=False), rng)

    def test_text_guided_loss_reaches_the_student(self, vlm):
        grads = []
        for w_tg in (0.0, 10.0):
            rng = np.random.default_rng(7)
            ts = TeacherStudent(SegNetwork(2, rng))
            unlabeled = batch(rng, 3, masks=False)
            # distinct captions so the contrastive pairs differ
            unlabeled.tokens[:, 1] = [3, 6, 7]
            train_step(batch(rng, 2), unlabeled, ts, self.optimizer(ts), vlm, StepWeights(w_tg=w_tg), rng)
            grads.append({n: p.grad.copy() for n, p in ts.student.named_parameters()})
        assert any(not np.allclose(grads[0][n], grads[1][n], rtol=0.0, atol=1e-10) for n in grads[0])

    def test_alpha_one_keeps_teacher_bit_identical(self, rng, vlm):
        ts = TeacherStudent(SegNetwork(2, rng), alpha=1.0)
        checksum = ts.teacher_checksum()
        train_step(batch(rng, 2), batch(rng, 2, masks=False), ts, self.optimizer(ts), vlm, StepWeights(), rng)
        assert ts.teacher_checksum() == checksum

    def test_zero_weights_reduce_total_to_supervised(self, rng, vlm):
        ts = TeacherStudent(SegNetwork(2, rng))
        weights = StepWeights(w_semi=0.0, w_tg=0.0)
        report = train_step(batch(rng, 2), batch(rng, 2, masks=False), ts, self.optimizer(ts), vlm, weights, rng)
        assert report.total == report.l_sup
        assert report.l_tg is None

    def test_overfits_four_samples(self, rng):
        ts = TeacherStudent(SegNetwork(2, rng))
        images = rng.uniform(size=(4, 16, 16))
        labeled = Batch(ids=list("abcd"), images=images, masks=(images > 0.6).astype(float))
        optimizer = Adam(ts.student.parameters(), lr=1e-2)
        weights = StepWeights(use_text=False)
        losses = [train_step(labeled, None, ts, optimizer, None, weights, rng).l_sup for _ in range(50)]
        assert losses[-1] < losses[0]
        assert np.mean(losses[-5:]) < np.mean(losses[:5])
