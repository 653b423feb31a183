"""End-to-end model: image → BEV features → diffusion refinement → fusion → logits.

This module provides:
- BEVFeatures: the intermediate maps of one forward pass
- DiffBEV: composition of backbone, view transformer, denoiser, fusion and decoder
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Any

import numpy as np
import numpy.typing as npt

from diffbev.core.config import TrainConfig
from diffbev.core.tensor import Tensor
from diffbev.core.types import ConditionKind
from diffbev.geometry.camera import DepthDistribution, grid_from_config, rig_from_config
from diffbev.geometry.view_transformer import SemanticFromDepth, lift_splat, plan_splat
from diffbev.model.backbone import Backbone
from diffbev.model.decoder import SegDecoder
from diffbev.model.denoiser import Denoiser
from diffbev.model.diffusion import forward_sample, make_schedule, refine
from diffbev.model.fusion import build_fusion, fuse
from diffbev.model.losses import LossWeights, loss_depth, loss_diff, loss_total, loss_wce
from diffbev.nn.module import Module

logger = logging.getLogger(__name__)


@dataclass
class BEVFeatures:
    """Intermediate maps of one image."""

    obev: Tensor
    sbev: Tensor
    depth: DepthDistribution


def build_condition(features: BEVFeatures, kind: ConditionKind) -> Tensor:
    """x_cond: F^{O-BEV}, F^{S-BEV} or their element-wise sum."""
    if kind is ConditionKind.OBEV:
        return features.obev
    if kind is ConditionKind.SBEV:
        return features.sbev
    return features.obev + features.sbev


class DiffBEV(Module):
    """The full segmentation model.

    With diffusion disabled the decoder consumes F^{O-BEV} directly and
    L_diff is zero.
    """

    def __init__(self, config: TrainConfig, rng: np.random.Generator) -> None:
        super().__init__()
        self.config = config
        self.rig = rig_from_config(config)
        self.grid = grid_from_config(config)
        self.plan = plan_splat(self.rig, self.grid, (config.feature_size, config.feature_size))
        self.schedule = make_schedule(config.timesteps, config.beta_start, config.beta_end)
        channels = config.bev_channels
        self.backbone = Backbone(channels, config.depth_bins, rng)
        self.semantic = SemanticFromDepth(config.depth_bins, channels, rng)
        self.denoiser = Denoiser(channels, config.denoiser_base, config.encoder_mode, rng) if config.diffusion else None
        self.fusion = build_fusion(config.fusion, channels, rng) if config.diffusion else None
        self.decoder = SegDecoder(channels, config.n_classes, rng)

    def encode_bev(self, image: Tensor) -> BEVFeatures:
        features, depth = self.backbone.encode(image)
        obev = lift_splat(features, depth, self.rig, self.grid, self.plan)
        sbev = self.semantic(depth, self.grid)
        return BEVFeatures(obev=obev, sbev=sbev, depth=depth)

    def refine_and_fuse(
        self, features: BEVFeatures, rng: np.random.Generator, n_steps: int, grad_steps: int | None = None
    ) -> Tensor:
        """Refine the condition with the reverse chain and fuse it with F^{O-BEV}.

        With detach_diffusion set no reverse step is recorded.
        """
        if self.denoiser is None or self.fusion is None:
            return features.obev
        cond = build_condition(features, self.config.condition)
        if self.config.detach_diffusion:
            grad_steps = 0
        refined = refine(cond, self.denoiser, self.schedule, rng, n_steps, grad_steps)
        return fuse(features.obev, refined, self.fusion)

    def forward(self, image: Tensor, rng: np.random.Generator, n_steps: int | None = None) -> Tensor:
        """Segmentation logits M×H×W for one image."""
        features = self.encode_bev(image)
        fused = self.refine_and_fuse(features, rng, n_steps or self.config.n_sample_steps)
        return self.decoder(fused)

    def training_losses(
        self,
        image: npt.NDArray[Any],
        labels: npt.NDArray[Any],
        valid_mask: npt.NDArray[Any],
        depth_target: npt.NDArray[Any],
        depth_mask: npt.NDArray[Any],
        weights: LossWeights,
        rng: np.random.Generator,
    ) -> tuple[Tensor, dict[str, float]]:
        """Loss of one training sample.

        The diffusion target x_0 is F^{O-BEV}: one uniform t and noise ε are
        drawn, the denoiser predicts ε from x_t and the condition, and a
        truncated reverse chain produces the refined feature that is fused
        and decoded. Only the last train_grad_steps reverse steps carry
        gradients.
        """
        features = self.encode_bev(Tensor(image))
        if self.denoiser is not None:
            x0 = features.obev
            t = int(rng.integers(1, self.schedule.T + 1))
            eps = rng.standard_normal(x0.shape)
            cond = build_condition(features, self.config.condition)
            eps_hat = self.denoiser(forward_sample(x0, t, self.schedule, eps), t, cond)
            l_diff = loss_diff(eps, eps_hat)
        else:
            l_diff = Tensor(0.0)
        fused = self.refine_and_fuse(features, rng, self.config.train_refine_steps, self.config.train_grad_steps)
        logits = self.decoder(fused)
        l_wce = loss_wce(logits, labels, valid_mask, weights.class_weights)
        l_depth = loss_depth(features.depth.probs, depth_target, depth_mask)
        return loss_total(l_wce, l_depth, l_diff, weights)
