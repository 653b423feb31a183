"""Tests for AdamW, the learning-rate schedule and gradient clipping."""

from __future__ import annotations

import numpy as np
import pytest

from diffbev.core.errors import ConfigError, NumericalError
from diffbev.nn.module import Parameter
from diffbev.training.optim import AdamW, clip_grad_norm, lr_at


def _param(values: list[float]) -> Parameter:
    return Parameter(np.array(values, dtype=np.float32))


class TestLrSchedule:
    """Tests for lr_at."""

    def test_warmup_rises_linearly(self) -> None:
        """Warm-up should step by lr/(W+1) and reach lr at iteration W."""
        assert lr_at(0, 1.0, 4, 10) == pytest.approx(0.2)
        assert lr_at(3, 1.0, 4, 10) == pytest.approx(0.8)
        assert lr_at(4, 1.0, 4, 10) == pytest.approx(1.0)

    def test_decays_to_zero_at_last_iteration(self) -> None:
        """The final iteration should use a learning rate of exactly 0."""
        assert lr_at(9, 1.0, 4, 10) == 0.0
        assert lr_at(7, 2.0, 4, 10) == pytest.approx(2.0 * 2 / 5)

    def test_never_negative(self) -> None:
        """Iterations past the end should clamp at 0."""
        assert lr_at(20, 1.0, 4, 10) == 0.0

    def test_no_decay_span(self) -> None:
        """With warm-up ending on the last iteration the peak rate should hold."""
        assert lr_at(1, 0.5, 1, 2) == 0.5


class TestClipGradNorm:
    """Tests for clip_grad_norm."""

    def test_rescales_above_threshold(self) -> None:
        """[3, 4] clipped to norm 1 should become [0.6, 0.8] and report 5."""
        p = _param([0.0, 0.0])
        p.grad = np.array([3.0, 4.0], dtype=np.float32)
        assert clip_grad_norm([p], 1.0) == pytest.approx(5.0)
        np.testing.assert_allclose(p.grad, [0.6, 0.8], rtol=1e-6)

    def test_leaves_small_gradients(self) -> None:
        """Gradients under the threshold should be untouched."""
        p = _param([0.0])
        p.grad = np.array([0.5], dtype=np.float32)
        clip_grad_norm([p], 10.0)
        np.testing.assert_array_equal(p.grad, [0.5])

    def test_global_norm_spans_parameters(self) -> None:
        """The norm should be taken over all parameters together, skipping missing grads."""
        a, b, c = _param([0.0]), _param([0.0]), _param([0.0])
        a.grad = np.array([3.0], dtype=np.float32)
        b.grad = np.array([4.0], dtype=np.float32)
        assert clip_grad_norm([a, b, c], 100.0) == pytest.approx(5.0)

    def test_non_finite_norm(self) -> None:
        """A NaN gradient should raise NumericalError for grad_norm."""
        p = _param([0.0])
        p.grad = np.array([np.nan], dtype=np.float32)
        with pytest.raises(NumericalError) as excinfo:
            clip_grad_norm([p], 1.0)
        assert excinfo.value.component == "grad_norm"


class TestAdamW:
    """Tests for AdamW."""

    def test_first_step_moves_by_lr(self) -> None:
        """With bias correction the first update should be lr·sign(g)."""
        p = _param([1.0, -1.0])
        optimizer = AdamW([("p", p)], weight_decay=0.0)
        p.grad = np.array([0.5, -2.0], dtype=np.float32)
        optimizer.step(0.1)
        np.testing.assert_allclose(p.data, [0.9, -0.9], atol=1e-6)
        assert optimizer.step_count == 1

    def test_zero_gradient_without_decay(self) -> None:
        """A zero gradient and zero weight decay should leave parameters unchanged."""
        p = _param([1.5, -2.0])
        optimizer = AdamW([("p", p)], weight_decay=0.0)
        p.grad = np.zeros(2, dtype=np.float32)
        optimizer.step(0.1)
        np.testing.assert_array_equal(p.data, [1.5, -2.0])

    def test_decay_only_without_gradient(self) -> None:
        """A parameter without gradient should only shrink by lr·wd."""
        p = _param([2.0])
        optimizer = AdamW([("p", p)], weight_decay=0.5)
        optimizer.step(0.1)
        np.testing.assert_allclose(p.data, [2.0 * (1 - 0.05)], rtol=1e-6)
        np.testing.assert_array_equal(optimizer.m["p"], [0.0])

    def test_keeps_dtype(self) -> None:
        """Updates should not promote float32 parameters."""
        p = _param([1.0])
        optimizer = AdamW([("p", p)])
        p.grad = np.array([1.0], dtype=np.float32)
        optimizer.step(1e-3)
        assert p.data.dtype == np.float32

    def test_negative_weight_decay(self) -> None:
        """Negative decay should be rejected."""
        with pytest.raises(ConfigError, match="weight_decay"):
            AdamW([("p", _param([1.0]))], weight_decay=-0.1)

    def test_state_dict_round_trip(self) -> None:
        """A restored optimizer should take the same next step."""
        a, b = _param([1.0, 2.0]), _param([1.0, 2.0])
        first = AdamW([("w", a)])
        for g in ([0.3, -0.1], [0.2, 0.4]):
            a.grad = np.array(g, dtype=np.float32)
            first.step(0.01)
        second = AdamW([("w", b)])
        second.load_state_dict(first.state_dict())
        b.data = a.data.copy()
        assert second.step_count == 2
        a.grad = b.grad = np.array([1.0, 1.0], dtype=np.float32)
        first.step(0.01)
        second.step(0.01)
        np.testing.assert_array_equal(a.data, b.data)

    def test_state_dict_keys(self) -> None:
        """Moments should be keyed m.<name> and v.<name> next to step."""
        optimizer = AdamW([("w", _param([1.0]))])
        assert set(optimizer.state_dict()) == {"m.w", "v.w", "step"}

    def test_load_missing_key(self) -> None:
        """A state without a parameter's moments should raise ConfigError."""
        optimizer = AdamW([("w", _param([1.0]))])
        state = optimizer.state_dict()
        del state["v.w"]
        with pytest.raises(ConfigError, match="missing"):
            optimizer.load_state_dict(state)

    def test_load_wrong_shape(self) -> None:
        """Misshapen moments should raise ConfigError."""
        optimizer = AdamW([("w", _param([1.0]))])
        state = optimizer.state_dict()
        state["m.w"] = np.zeros(3, dtype=np.float32)
        with pytest.raises(ConfigError, match="shape"):
            optimizer.load_state_dict(state)
