"""Residual segmentation head."""

from __future__ import annotations

import numpy as np

from diffbev.core.errors import ShapeError
from diffbev.core.tensor import Tensor
from diffbev.nn.layers import Conv2d, ConvBlock
from diffbev.nn.module import Module

DEFAULT_BLOCKS = 8


class SegDecoder(Module):
    """Conv blocks with a residual around every pair, then a per-cell classifier.

    Attributes:
        blocks: ConvBlocks C→C (3×3 conv, per-sample Norm2d, ReLU).
        classifier: 1×1 conv C→M producing class logits.
    """

    def __init__(self, channels: int, n_classes: int, rng: np.random.Generator, n_blocks: int = DEFAULT_BLOCKS) -> None:
        super().__init__()
        if n_blocks < 2 or n_blocks % 2:
            raise ShapeError(f"decoder needs an even number of blocks >= 2, got {n_blocks}")
        self.channels = channels
        self.blocks = [ConvBlock(channels, channels, rng, track_running_stats=False) for _ in range(n_blocks)]
        self.classifier = Conv2d(channels, n_classes, 1, rng)

    def forward(self, bev: Tensor) -> Tensor:
        return self.seg_forward(bev)

    def seg_forward(self, bev: Tensor) -> Tensor:
        """C×H×W fused BEV feature → M×H×W logits.

        Raises:
            ShapeError: If the channel count differs from the decoder's.
        """
        if bev.ndim != 3 or bev.shape[0] != self.channels:
            raise ShapeError(f"decoder expects {self.channels}×H×W input, got {bev.shape}")
        x = bev
        for first, second in zip(self.blocks[::2], self.blocks[1::2], strict=True):
            x = x + second(first(x))
        return self.classifier(x)
