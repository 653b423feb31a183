"""Core module - Tensor engine, archive codec, configuration and errors."""

from diffbev.core.archive import decode_archive, encode_archive, load_archive, save_archive
from diffbev.core.config import TrainConfig, format_config, load_config, parse_config, save_config
from diffbev.core.errors import (
    ArchiveError,
    ConfigError,
    DatasetError,
    DiffBEVError,
    NumericalError,
    ShapeError,
)
from diffbev.core.gradcheck import GradcheckReport, gradcheck
from diffbev.core.tensor import Tape, Tensor, count_macs, elementwise, matmul, no_grad, precision
from diffbev.core.types import ConditionKind, EncoderMode, FusionMode

__all__ = [
    # Archive
    "decode_archive",
    "encode_archive",
    "load_archive",
    "save_archive",
    # Config
    "TrainConfig",
    "format_config",
    "load_config",
    "parse_config",
    "save_config",
    # Errors
    "ArchiveError",
    "ConfigError",
    "DatasetError",
    "DiffBEVError",
    "NumericalError",
    "ShapeError",
    # Gradient checking
    "GradcheckReport",
    "gradcheck",
    # Tensor
    "Tape",
    "Tensor",
    "count_macs",
    "elementwise",
    "matmul",
    "no_grad",
    "precision",
    # Types
    "ConditionKind",
    "EncoderMode",
    "FusionMode",
]
