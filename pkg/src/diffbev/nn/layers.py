"""Basic layers: Conv2d, Linear, Norm2d and the conv-norm-relu block."""

from __future__ import annotations

import numpy as np

from diffbev.core import functional as F
from diffbev.core.tensor import Tensor, matmul
from diffbev.nn.module import Module, Parameter, uniform_init


class Conv2d(Module):
    """k×k convolution with "same" padding by default."""

    def __init__(
        self,
        in_channels: int,
        out_channels: int,
        kernel_size: int,
        rng: np.random.Generator,
        padding: int | None = None,
        bias: bool = True,
    ) -> None:
        super().__init__()
        self.in_channels = in_channels
        self.out_channels = out_channels
        self.padding = kernel_size // 2 if padding is None else padding
        fan_in = in_channels * kernel_size * kernel_size
        self.weight = uniform_init(rng, (out_channels, in_channels, kernel_size, kernel_size), fan_in)
        self.bias = Parameter(np.zeros(out_channels)) if bias else None

    def forward(self, x: Tensor) -> Tensor:
        return F.conv2d(x, self.weight, self.bias, stride=1, padding=self.padding)


class Linear(Module):
    """x·W + b on N×in_features rows."""

    def __init__(self, in_features: int, out_features: int, rng: np.random.Generator, bias: bool = True) -> None:
        super().__init__()
        self.weight = uniform_init(rng, (in_features, out_features), in_features)
        self.bias = Parameter(np.zeros(out_features)) if bias else None

    def forward(self, x: Tensor) -> Tensor:
        out = matmul(x, self.weight)
        return out + self.bias if self.bias is not None else out


class Norm2d(Module):
    """Per-channel normalization with learned scale and shift.

    With track_running_stats off the layer keeps no buffers and normalizes
    every input with its own statistics, in training and eval mode alike.
    """

    def __init__(self, channels: int, track_running_stats: bool = True) -> None:
        super().__init__()
        self.scale = Parameter(np.ones(channels))
        self.shift = Parameter(np.zeros(channels))
        self.track_running_stats = track_running_stats
        if track_running_stats:
            self.register_buffer("running_mean", np.zeros(channels))
            self.register_buffer("running_var", np.ones(channels))

    def forward(self, x: Tensor) -> Tensor:
        return F.norm2d(
            x, self.scale, self.shift, self._buffers.get("running_mean"), self._buffers.get("running_var"), self.training
        )


class ConvBlock(Module):
    """3×3 conv → Norm2d → ReLU."""

    def __init__(self, in_channels: int, out_channels: int, rng: np.random.Generator, track_running_stats: bool = True) -> None:
        super().__init__()
        self.conv = Conv2d(in_channels, out_channels, 3, rng)
        self.norm = Norm2d(out_channels, track_running_stats=track_running_stats)

    def forward(self, x: Tensor) -> Tensor:
        return F.relu(self.norm(self.conv(x)))
