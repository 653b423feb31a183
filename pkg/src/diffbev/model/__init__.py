"""Model module - Backbone, diffusion, fusion, decoder, losses and the full pipeline."""

from diffbev.model.backbone import Backbone
from diffbev.model.decoder import SegDecoder
from diffbev.model.denoiser import Denoiser, timestep_embedding
from diffbev.model.diffusion import (
    NoiseSchedule,
    forward_sample,
    make_schedule,
    predict_x0,
    q_step,
    refine,
    reverse_step,
    sample_timesteps,
)
from diffbev.model.fusion import (
    AddFusion,
    ConcatFusion,
    CrossAttention,
    CrossAttentionFusion,
    build_fusion,
    cross_attend,
    fuse,
    scaled_dot_product_attention,
)
from diffbev.model.losses import LossWeights, class_weights, loss_depth, loss_diff, loss_total, loss_wce
from diffbev.model.pipeline import BEVFeatures, DiffBEV, build_condition

__all__ = [
    # Backbone and decoder
    "Backbone",
    "SegDecoder",
    # Diffusion
    "Denoiser",
    "NoiseSchedule",
    "forward_sample",
    "make_schedule",
    "predict_x0",
    "q_step",
    "refine",
    "reverse_step",
    "sample_timesteps",
    "timestep_embedding",
    # Fusion
    "AddFusion",
    "ConcatFusion",
    "CrossAttention",
    "CrossAttentionFusion",
    "build_fusion",
    "cross_attend",
    "fuse",
    "scaled_dot_product_attention",
    # Losses
    "LossWeights",
    "class_weights",
    "loss_depth",
    "loss_diff",
    "loss_total",
    "loss_wce",
    # Pipeline
    "BEVFeatures",
    "DiffBEV",
    "build_condition",
]
