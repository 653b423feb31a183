"""Fusion of the refined diffusion output with the original BEV feature.

This module provides:
- scaled_dot_product_attention: softmax(QKᵀ/√d)·V with its weights
- CrossAttention / cross_attend: Q from the BEV feature, K and V from the
  diffusion output, output projection plus a residual to the BEV feature
- AddFusion, ConcatFusion: ablation baselines
- build_fusion / fuse: mode-selected construction and application
"""

from __future__ import annotations

import math

import numpy as np

from diffbev.core import functional as F
from diffbev.core.errors import ShapeError
from diffbev.core.tensor import Tensor, concat, matmul, transpose
from diffbev.core.types import FusionMode
from diffbev.nn.layers import Conv2d
from diffbev.nn.module import Module, uniform_init


def scaled_dot_product_attention(q: Tensor, k: Tensor, v: Tensor) -> tuple[Tensor, Tensor]:
    """Single-head attention over token rows.

    Args:
        q: N_q×d queries.
        k: N_k×d keys.
        v: N_k×d_v values.

    Returns:
        (N_q×d_v output, N_q×N_k attention weights).
    """
    if q.shape[1] != k.shape[1]:
        raise ShapeError(f"query dim {q.shape} and key dim {k.shape} differ")
    scores = matmul(q, transpose(k)) * (1.0 / math.sqrt(q.shape[1]))
    weights = F.softmax(scores, axis=-1)
    return matmul(weights, v), weights


def _check_pair(bev: Tensor, diff_out: Tensor) -> None:
    if bev.shape != diff_out.shape or bev.ndim != 3:
        raise ShapeError(f"fusion inputs must share a C×H×W shape, got {bev.shape} and {diff_out.shape}")


class CrossAttention(Module):
    """Projections W^Q, W^K, W^V (C×C) and W^Out (C×C), one head."""

    def __init__(self, channels: int, rng: np.random.Generator) -> None:
        super().__init__()
        self.w_q = uniform_init(rng, (channels, channels), channels)
        self.w_k = uniform_init(rng, (channels, channels), channels)
        self.w_v = uniform_init(rng, (channels, channels), channels)
        self.w_out = uniform_init(rng, (channels, channels), channels)

    def forward(self, bev: Tensor, diff_out: Tensor) -> Tensor:
        return cross_attend(bev, diff_out, self)


def cross_attend(bev: Tensor, diff_out: Tensor, params: CrossAttention) -> Tensor:
    """Attend from BEV tokens (queries) to diffusion-output tokens (keys/values).

    Returns:
        Attn·W^Out reshaped to C×H×W, plus bev.
    """
    _check_pair(bev, diff_out)
    _, height, width = bev.shape
    query_tokens = F.flatten_tokens(bev)
    source_tokens = F.flatten_tokens(diff_out)
    attended, _ = scaled_dot_product_attention(
        matmul(query_tokens, params.w_q),
        matmul(source_tokens, params.w_k),
        matmul(source_tokens, params.w_v),
    )
    out = F.unflatten_tokens(matmul(attended, params.w_out), height, width)
    return out + bev


class AddFusion(Module):
    """Element-wise sum."""

    def forward(self, bev: Tensor, diff_out: Tensor) -> Tensor:
        _check_pair(bev, diff_out)
        return bev + diff_out


class ConcatFusion(Module):
    """Channel concatenation followed by a 1×1 conv back to C channels."""

    def __init__(self, channels: int, rng: np.random.Generator) -> None:
        super().__init__()
        self.proj = Conv2d(2 * channels, channels, 1, rng)

    def forward(self, bev: Tensor, diff_out: Tensor) -> Tensor:
        _check_pair(bev, diff_out)
        return self.proj(concat([bev, diff_out], axis=0))


class CrossAttentionFusion(CrossAttention):
    """Cross-attention fusion (the default mode)."""


def build_fusion(mode: FusionMode | str, channels: int, rng: np.random.Generator) -> Module:
    """Instantiate the fusion module for a mode."""
    mode = FusionMode(mode)
    if mode is FusionMode.ADD:
        return AddFusion()
    if mode is FusionMode.CONCAT:
        return ConcatFusion(channels, rng)
    return CrossAttentionFusion(channels, rng)


def fuse(bev: Tensor, diff_out: Tensor, fusion: Module) -> Tensor:
    """Apply a fusion module; every mode maps two C×H×W maps to one."""
    out: Tensor = fusion(bev, diff_out)
    return out
