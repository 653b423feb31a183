"""Tests for the segmentation decoder."""

from __future__ import annotations

import numpy as np
import pytest

from diffbev.core.errors import ShapeError
from diffbev.core.tensor import Tensor
from diffbev.model.decoder import SegDecoder


class TestSegDecoder:
    """Tests for SegDecoder.seg_forward."""

    @pytest.mark.parametrize("n_classes", [2, 5])
    def test_output_shape(self, n_classes: int) -> None:
        """(64, 32, 32) in should give (M, 32, 32) logits."""
        decoder = SegDecoder(64, n_classes, np.random.default_rng(0))
        bev = Tensor(np.random.default_rng(1).standard_normal((64, 32, 32)))
        assert decoder.seg_forward(bev).shape == (n_classes, 32, 32)

    def test_zero_classifier_gives_bias(self) -> None:
        """A zeroed classifier should output its bias everywhere."""
        decoder = SegDecoder(4, 2, np.random.default_rng(0))
        decoder.classifier.weight.data[:] = 0.0
        assert decoder.classifier.bias is not None
        decoder.classifier.bias.data[:] = [0.5, -1.0]
        logits = decoder(Tensor(np.random.default_rng(1).standard_normal((4, 6, 6)))).data
        np.testing.assert_array_equal(logits[0], 0.5)
        np.testing.assert_array_equal(logits[1], -1.0)

    def test_block_count(self) -> None:
        """Should build eight blocks by default."""
        assert len(SegDecoder(4, 2, np.random.default_rng(0)).blocks) == 8

    def test_rejects_odd_block_count(self) -> None:
        """Residual pairs need an even block count."""
        with pytest.raises(ShapeError):
            SegDecoder(4, 2, np.random.default_rng(0), n_blocks=3)

    def test_channel_mismatch(self) -> None:
        """Should raise ShapeError for the wrong channel count."""
        with pytest.raises(ShapeError, match="decoder expects"):
            SegDecoder(4, 2, np.random.default_rng(0)).seg_forward(Tensor(np.zeros((3, 4, 4))))
