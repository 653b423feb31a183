"""Small convolutional image encoder with depth and context heads."""

from __future__ import annotations

import numpy as np

from diffbev.core import functional as F
from diffbev.core.errors import ShapeError
from diffbev.core.tensor import Tensor
from diffbev.geometry.camera import DepthDistribution
from diffbev.nn.layers import Conv2d, ConvBlock
from diffbev.nn.module import Module

DEFAULT_WIDTHS = (32, 64, 64, 64)
DOWNSAMPLE = 8


class Backbone(Module):
    """Four conv blocks, 2×2 pooling after the first three (1/8 resolution).

    Attributes:
        blocks: ConvBlocks 3→32→64→64→64 by default, normalized per image.
        depth_head: 1×1 conv to n_bins logits, softmaxed per pixel.
        context_head: 1×1 conv to the BEV channel count.
    """

    def __init__(self, channels: int, n_bins: int, rng: np.random.Generator, widths: tuple[int, ...] = DEFAULT_WIDTHS) -> None:
        super().__init__()
        if len(widths) != 4:
            raise ShapeError(f"backbone needs 4 block widths, got {widths}")
        ins = (3, *widths[:-1])
        self.blocks = [ConvBlock(cin, cout, rng, track_running_stats=False) for cin, cout in zip(ins, widths, strict=True)]
        self.depth_head = Conv2d(widths[-1], n_bins, 1, rng)
        self.context_head = Conv2d(widths[-1], channels, 1, rng)

    def forward(self, image: Tensor) -> tuple[Tensor, DepthDistribution]:
        return self.encode(image)

    def encode(self, image: Tensor) -> tuple[Tensor, DepthDistribution]:
        """Encode a 3×H×W image into C×H/8×W/8 features and a depth distribution.

        Raises:
            ShapeError: If the image is not 3-channel or not divisible by 8.
        """
        if image.ndim != 3 or image.shape[0] != 3:
            raise ShapeError(f"expected a 3×H×W image, got {image.shape}")
        if image.shape[1] % DOWNSAMPLE or image.shape[2] % DOWNSAMPLE:
            raise ShapeError(f"image size {image.shape[1:]} must be divisible by {DOWNSAMPLE}")
        x = image
        for i, block in enumerate(self.blocks):
            x = block(x)
            if i < 3:
                x = F.avg_pool2d(x, 2)
        depth = F.softmax(self.depth_head(x), axis=0)
        return self.context_head(x), DepthDistribution(depth)
