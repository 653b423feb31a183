"""Tests for the training losses."""

from __future__ import annotations

import math

import numpy as np
import pytest

from diffbev.core.errors import ConfigError, NumericalError, ShapeError
from diffbev.core.gradcheck import gradcheck
from diffbev.core.tensor import Tape, Tensor
from diffbev.model.losses import LossWeights, class_weights, loss_depth, loss_diff, loss_total, loss_wce

LN2 = math.log(2.0)


def wce_oracle(logits: np.ndarray, labels: np.ndarray, valid: np.ndarray, weights: np.ndarray) -> float:
    n_classes, height, width = logits.shape
    n_valid = valid.sum()
    total = 0.0
    for c in range(n_classes):
        n_pos = sum(labels[c, i, j] * valid[i, j] for i in range(height) for j in range(width))
        norm = n_pos if n_pos > 0 else max(n_valid, 1)
        for i in range(height):
            for j in range(width):
                if not valid[i, j]:
                    continue
                p = 1.0 / (1.0 + math.exp(-logits[c, i, j]))
                term = math.log(p) if labels[c, i, j] else math.log(1.0 - p)
                total -= weights[c] / norm * term
    return total


class TestWeightedBCE:
    """Tests for loss_wce."""

    def test_single_pixel(self) -> None:
        """y=1, p=0.5, w=1 should give ln 2."""
        loss = loss_wce(Tensor(np.zeros((1, 1, 1))), np.ones((1, 1, 1)), np.ones((1, 1)), [1.0])
        assert loss.item() == pytest.approx(LN2, abs=1e-5)

    def test_perfect_prediction(self) -> None:
        """Confident correct logits should give a near-zero loss."""
        labels = np.array([[[1, 0], [0, 1]]])
        logits = Tensor(np.where(labels == 1, 20.0, -20.0))
        assert loss_wce(logits, labels, np.ones((2, 2)), [1.0]).item() < 1e-6

    @pytest.mark.usefixtures("float64")
    def test_matches_scalar_oracle(self) -> None:
        """Should match a double-loop evaluation on a 3×3 grid."""
        rng = np.random.default_rng(0)
        logits = rng.uniform(-2.0, 2.0, (2, 3, 3))
        labels = (rng.uniform(size=(2, 3, 3)) < 0.4).astype(np.uint8)
        labels[1] = 0
        valid = np.ones((3, 3))
        valid[0, 2] = 0
        weights = np.array([0.5, 2.0])
        loss = loss_wce(Tensor(logits), labels, valid, weights)
        assert loss.item() == pytest.approx(wce_oracle(logits, labels, valid, weights), abs=1e-6)

    def test_linear_in_class_weights(self) -> None:
        """Doubling every class weight should double the loss."""
        rng = np.random.default_rng(1)
        logits = Tensor(rng.standard_normal((3, 4, 4)))
        labels = (rng.uniform(size=(3, 4, 4)) < 0.5).astype(np.uint8)
        valid = np.ones((4, 4))
        single = loss_wce(logits, labels, valid, [1.0, 0.5, 2.0]).item()
        double = loss_wce(logits, labels, valid, [2.0, 1.0, 4.0]).item()
        assert double == pytest.approx(2.0 * single, rel=1e-6)

    def test_masked_cells_ignored(self) -> None:
        """Changing logits outside the mask should not change the loss."""
        labels = np.ones((1, 2, 2))
        valid = np.array([[1, 0], [0, 0]])
        a = loss_wce(Tensor([[[0.0, 5.0], [5.0, 5.0]]]), labels, valid, [1.0]).item()
        b = loss_wce(Tensor([[[0.0, -5.0], [-5.0, -5.0]]]), labels, valid, [1.0]).item()
        assert a == b

    def test_gradients(self) -> None:
        """Gradients w.r.t. the logits should match finite differences."""
        rng = np.random.default_rng(2)
        logits = Tensor(rng.standard_normal((2, 3, 3)))
        labels = (rng.uniform(size=(2, 3, 3)) < 0.5).astype(np.uint8)
        report = gradcheck(lambda: loss_wce(logits, labels, np.ones((3, 3)), [1.0, 3.0]), {"logits": logits})
        assert report.passed, report.summary()

    def test_shape_mismatch(self) -> None:
        """Should raise ShapeError naming the disagreeing shapes."""
        with pytest.raises(ShapeError, match="loss_wce"):
            loss_wce(Tensor(np.zeros((2, 3, 3))), np.zeros((2, 3, 3)), np.ones((3, 3)), [1.0])


class TestDepthLoss:
    """Tests for loss_depth."""

    def test_uniform_over_two_bins(self) -> None:
        """Uniform probabilities against a one-hot target should average ln 2 per entry."""
        depth = Tensor(np.full((2, 2, 2), 0.5))
        onehot = np.zeros((2, 2, 2))
        onehot[0] = 1.0
        assert loss_depth(depth, onehot, np.ones((2, 2))).item() == pytest.approx(LN2, abs=1e-5)

    def test_upsamples_low_resolution_predictions(self) -> None:
        """A 1×1 prediction should be resized to the 4×4 target."""
        onehot = np.zeros((2, 4, 4))
        onehot[1] = 1.0
        loss = loss_depth(Tensor(np.full((2, 1, 1), 0.5)), onehot, np.ones((4, 4)))
        assert loss.item() == pytest.approx(LN2, abs=1e-5)

    def test_exact_match(self) -> None:
        """Probability 1 on the true bin should give zero loss."""
        onehot = np.zeros((3, 2, 2))
        onehot[2] = 1.0
        assert loss_depth(Tensor(onehot), onehot, np.ones((2, 2))).item() == pytest.approx(0.0, abs=1e-6)

    def test_empty_mask(self) -> None:
        """No valid pixel should give exactly zero with a defined gradient."""
        depth = Tensor(np.full((2, 2, 2), 0.5), requires_grad=True)
        with Tape() as tape:
            loss = loss_depth(depth, np.zeros((2, 2, 2)), np.zeros((2, 2)))
            tape.backward(loss)
        assert loss.item() == 0.0
        assert depth.grad is not None
        assert not depth.grad.any()

    def test_shape_mismatch(self) -> None:
        """Should reject a target with another bin count."""
        with pytest.raises(ShapeError):
            loss_depth(Tensor(np.full((2, 2, 2), 0.5)), np.zeros((3, 2, 2)), np.ones((2, 2)))


class TestDiffusionLoss:
    """Tests for loss_diff."""

    def test_exact_prediction(self) -> None:
        """ε̂ = ε should give zero."""
        eps = np.random.default_rng(0).standard_normal((2, 3, 3))
        assert loss_diff(eps, Tensor(eps)).item() == pytest.approx(0.0, abs=1e-12)

    def test_mean_of_squares(self) -> None:
        """ε=[1, -1] against ε̂=[0, 0] should give 1."""
        assert loss_diff(np.array([1.0, -1.0]), Tensor(np.zeros(2))).item() == 1.0

    def test_shape_mismatch(self) -> None:
        """Broadcastable but different shapes should be rejected."""
        with pytest.raises(ShapeError):
            loss_diff(np.zeros((2, 2)), Tensor(np.zeros(2)))


class TestTotalLoss:
    """Tests for loss_total and LossWeights."""

    def test_weighted_sum(self) -> None:
        """(1.0, 0.2, 0.3) with λ=(10, 1) should give 3.3."""
        total, parts = loss_total(Tensor(1.0), Tensor(0.2), Tensor(0.3), LossWeights(10.0, 1.0))
        assert total.item() == pytest.approx(3.3, rel=1e-6)
        assert parts["l_total"] == pytest.approx(3.3, rel=1e-6)
        assert parts["l_wce"] == 1.0

    def test_zero_lambdas(self) -> None:
        """λ₁ = λ₂ = 0 should leave the segmentation term alone."""
        total, _ = loss_total(Tensor(0.7), Tensor(5.0), Tensor(9.0), LossWeights(0.0, 0.0))
        assert total.item() == pytest.approx(0.7, rel=1e-6)

    def test_nan_names_component(self) -> None:
        """A NaN part should raise NumericalError naming it."""
        with pytest.raises(NumericalError) as excinfo:
            loss_total(Tensor(1.0), Tensor(float("nan")), Tensor(0.0), LossWeights())
        assert excinfo.value.component == "l_depth"

    def test_rejects_negative_lambda(self) -> None:
        """Negative weights should be a configuration error."""
        with pytest.raises(ConfigError):
            LossWeights(-1.0, 1.0)

    def test_rejects_non_positive_class_weight(self) -> None:
        """Class weights must be positive."""
        with pytest.raises(ConfigError):
            LossWeights(class_weights=np.array([1.0, 0.0]))


class TestClassWeights:
    """Tests for class_weights."""

    def test_inverse_frequency(self) -> None:
        """Frequencies 1/2 and 1/4 should give weights 2/3 and 4/3."""
        labels = np.zeros((1, 2, 2, 2))
        labels[0, 0, 0] = 1
        labels[0, 1, 0, 0] = 1
        np.testing.assert_allclose(class_weights(labels, np.ones((1, 2, 2))), [2.0 / 3.0, 4.0 / 3.0])

    def test_absent_class_is_clipped(self) -> None:
        """A class without positives should get the capped weight and push the others to the floor."""
        labels = np.zeros((1, 2, 2, 2))
        labels[0, 0] = 1
        weights = class_weights(labels, np.ones((1, 2, 2)))
        assert weights[0] == pytest.approx(0.1)
        assert weights[1] == pytest.approx(40.0 / 20.5)

    def test_masked_cells_do_not_count(self) -> None:
        """Positives outside the valid mask should be ignored."""
        labels = np.ones((1, 2, 2, 2))
        valid = np.zeros((1, 2, 2))
        valid[0, 0, 0] = 1
        np.testing.assert_allclose(class_weights(labels, valid), [1.0, 1.0])
