"""Tests for the gradient-check suite."""

from __future__ import annotations

import pytest

from diffbev.training.gradsuite import cases, run_gradsuite

FAST_CASES = [
    "elementwise",
    "matmul",
    "conv2d",
    "norm2d",
    "softmax",
    "scatter_add",
    "bilinear_interpolate",
    "loss_wce",
    "loss_depth",
    "lift_splat",
    "cross_attention",
]


class TestGradsuite:
    """Tests for the case list and run_gradsuite()."""

    def test_case_names_unique(self) -> None:
        """Every check should have its own name."""
        names = [name for name, _ in cases()]
        assert len(names) == len(set(names))
        assert "composed_loss" in names
        assert {"denoiser[self_attention]", "denoiser[conv]"} <= set(names)

    @pytest.mark.parametrize("name", FAST_CASES)
    def test_case_passes(self, name: str) -> None:
        """Analytic and numeric gradients should agree within tolerance."""
        reports = [r for r in run_gradsuite(only=name) if r.name == name]
        assert len(reports) == 1
        assert reports[0].passed, reports[0].summary()

    def test_only_filter_without_match(self) -> None:
        """A filter matching nothing should return no reports."""
        assert run_gradsuite(only="no-such-check") == []

    @pytest.mark.slow
    def test_full_suite(self) -> None:
        """The whole suite, including the composed training loss, should pass."""
        failed = [r.summary() for r in run_gradsuite() if not r.passed]
        assert not failed, failed
