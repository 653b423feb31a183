"""Condition-modulated UNet predicting the injected noise."""

from __future__ import annotations

import math

import numpy as np
import numpy.typing as npt

from diffbev.core import functional as F
from diffbev.core.errors import ShapeError
from diffbev.core.tensor import Tensor, concat, reshape
from diffbev.core.types import EncoderMode
from diffbev.model.fusion import scaled_dot_product_attention
from diffbev.nn.layers import Conv2d, Linear
from diffbev.nn.module import Module

TIME_EMBED_DIM = 64
FFN_RATIO = 4


def timestep_embedding(t: int, dim: int = TIME_EMBED_DIM) -> npt.NDArray[np.float64]:
    """Sinusoidal embedding [sin(t·f_i), cos(t·f_i)], f_i = 10000^(−i/(dim/2))."""
    half = dim // 2
    freqs = np.exp(-math.log(10000.0) * np.arange(half) / half)
    args = float(t) * freqs
    return np.concatenate([np.sin(args), np.cos(args)])


class SelfAttentionEncoder(Module):
    """Spatial self-attention over H·W tokens followed by a token-wise MLP.

    Both sub-layers are residual.
    """

    def __init__(self, channels: int, rng: np.random.Generator) -> None:
        super().__init__()
        self.query = Linear(channels, channels, rng, bias=False)
        self.key = Linear(channels, channels, rng, bias=False)
        self.value = Linear(channels, channels, rng, bias=False)
        self.out = Linear(channels, channels, rng, bias=False)
        self.hidden = Linear(channels, FFN_RATIO * channels, rng)
        self.proj = Linear(FFN_RATIO * channels, channels, rng)

    def forward(self, x: Tensor) -> Tensor:
        _, height, width = x.shape
        tokens = F.flatten_tokens(x)
        attended, _ = scaled_dot_product_attention(self.query(tokens), self.key(tokens), self.value(tokens))
        tokens = tokens + self.out(attended)
        tokens = tokens + self.proj(F.relu(self.hidden(tokens)))
        return F.unflatten_tokens(tokens, height, width)


class ConvEncoder(Module):
    """One 3×3 convolution."""

    def __init__(self, channels: int, rng: np.random.Generator) -> None:
        super().__init__()
        self.conv = Conv2d(channels, channels, 3, rng)

    def forward(self, x: Tensor) -> Tensor:
        return self.conv(x)


class ResBlock(Module):
    """conv → +time → relu → conv → +skip → relu."""

    def __init__(self, in_channels: int, out_channels: int, rng: np.random.Generator) -> None:
        super().__init__()
        self.out_channels = out_channels
        self.conv1 = Conv2d(in_channels, out_channels, 3, rng)
        self.time = Linear(TIME_EMBED_DIM, out_channels, rng)
        self.conv2 = Conv2d(out_channels, out_channels, 3, rng)
        self.skip = Conv2d(in_channels, out_channels, 1, rng) if in_channels != out_channels else None

    def forward(self, x: Tensor, temb: Tensor) -> Tensor:
        h = self.conv1(x) + reshape(self.time(temb), (self.out_channels, 1, 1))
        h = self.conv2(F.relu(h))
        residual = self.skip(x) if self.skip is not None else x
        return F.relu(h + residual)


class Denoiser(Module):
    """ε_θ(x_t, t, x_cond) on C×H×W maps (H, W divisible by 4).

    The noisy sample is encoded (self-attention or conv), gated by the
    conv-encoded condition, then passed through a two-level UNet whose
    residual blocks each add a projection of the time embedding.
    """

    def __init__(self, channels: int, base: int, encoder_mode: EncoderMode | str, rng: np.random.Generator) -> None:
        super().__init__()
        self.channels = channels
        self.encoder_mode = EncoderMode(encoder_mode)
        self.encoder: Module = (
            SelfAttentionEncoder(channels, rng) if self.encoder_mode is EncoderMode.SELF_ATTENTION else ConvEncoder(channels, rng)
        )
        self.cond_encoder = Conv2d(channels, channels, 3, rng)
        self.stem = Conv2d(channels, base, 3, rng)
        self.down1 = ResBlock(base, base, rng)
        self.down2 = ResBlock(base, 2 * base, rng)
        self.mid = ResBlock(2 * base, 2 * base, rng)
        self.up2 = ResBlock(4 * base, base, rng)
        self.up1 = ResBlock(2 * base, base, rng)
        self.head = Conv2d(base, channels, 3, rng)

    def forward(self, x_t: Tensor, t: int, x_cond: Tensor) -> Tensor:
        return self.denoise(x_t, t, x_cond)

    def denoise(self, x_t: Tensor, t: int, x_cond: Tensor) -> Tensor:
        """Predict ε̂ with the same shape as x_t.

        Raises:
            ShapeError: If sample and condition differ or H, W are not divisible by 4.
        """
        if x_t.shape != x_cond.shape:
            raise ShapeError(f"sample {x_t.shape} and condition {x_cond.shape} differ")
        if x_t.ndim != 3 or x_t.shape[0] != self.channels:
            raise ShapeError(f"expected {self.channels}×H×W input, got {x_t.shape}")
        _, height, width = x_t.shape
        if height % 4 or width % 4:
            raise ShapeError(f"denoiser needs H, W divisible by 4, got {(height, width)}")

        temb = Tensor(timestep_embedding(t).reshape(1, TIME_EMBED_DIM))
        gated = self.encoder(x_t) * self.cond_encoder(x_cond)
        h0 = self.down1(self.stem(gated), temb)
        h1 = self.down2(F.avg_pool2d(h0, 2), temb)
        mid = self.mid(F.avg_pool2d(h1, 2), temb)
        up = F.bilinear_interpolate(mid, (height // 2, width // 2))
        up = self.up2(concat([up, h1], axis=0), temb)
        up = F.bilinear_interpolate(up, (height, width))
        up = self.up1(concat([up, h0], axis=0), temb)
        return self.head(up)
