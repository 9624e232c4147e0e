import numpy as np
import pytest

from dusss.app.metrics import dice, evaluate, miou
from dusss.errors import ShapeError


class TestDice:
    def test_known_overlap(self):
        pred = np.array([[1, 1, 0, 0]])
        gt = np.array([[0, 1, 1, 0]])
        assert dice(pred, gt) == pytest.approx(0.5)
        assert miou(pred, gt) == pytest.approx(1 / 3)

    def test_probabilities_are_thresholded(self):
        pred = np.array([[0.49, 0.5, 0.9]])
        gt = np.array([[0, 1, 1]])
        assert dice(pred, gt) == 1.0

    def test_both_empty(self):
        empty = np.zeros((3, 3))
        assert dice(empty, empty) == 1.0
        assert miou(empty, empty) == 1.0

    def test_prediction_empty_only(self):
        assert dice(np.zeros((2, 2)), np.eye(2)) == 0.0
        assert miou(np.zeros((2, 2)), np.eye(2)) == 0.0

    def test_shape_mismatch(self):
        with pytest.raises(ShapeError):
            dice(np.zeros((2, 2)), np.zeros((2, 3)))


class TestEvaluate:
    def test_means_and_per_sample(self):
        gts = [np.eye(2), np.ones((2, 2))]
        preds = [np.eye(2), np.zeros((2, 2))]
        result = evaluate(["a", "b"], preds, gts)
        assert result.dice == pytest.approx(0.5)
        assert result.miou == pytest.approx(0.5)
        assert [s.id for s in result.per_sample] == ["a", "b"]

    def test_length_mismatch(self):
        with pytest.raises(ShapeError):
            evaluate(["a", "b"], [np.eye(2)], [np.eye(2)])

    def test_empty(self):
        result = evaluate([], [], [])
        assert result.per_sample == []


def test_dice_never_below_iou(rng):
    for _ in range(1000):
        pred = rng.random((6, 6)) < rng.random()
        gt = rng.random((6, 6)) < rng.random()
        assert dice(pred, gt) >= miou(pred, gt)
