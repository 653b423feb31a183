"""Shared enums for diffbev.

Values are the lowercase spellings accepted in config files and on the CLI.
"""

from __future__ import annotations

from enum import Enum


class ConditionKind(str, Enum):
    """Which BEV feature conditions the denoiser."""

    OBEV = "obev"  # view-transformer output
    SBEV = "sbev"  # semantic feature from the depth distribution
    SUM = "sum"  # element-wise sum of both


class FusionMode(str, Enum):
    """How the diffusion output is merged back into the BEV feature."""

    CROSS_ATTENTION = "cross_attention"
    CONCAT = "concat"
    ADD = "add"


class EncoderMode(str, Enum):
    """Encoding applied to the noisy sample before condition modulation."""

    SELF_ATTENTION = "self_attention"
    CONV = "conv"
