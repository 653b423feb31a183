"""Training configuration for diffbev.

This module provides:
- TrainConfig: every tunable of the pipeline with its default
- load_config / save_config: `key = value` file IO
- parse_config / format_config: text codec used by files and checkpoints
"""

from __future__ import annotations

import dataclasses
import hashlib
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Any

from diffbev.core.errors import ConfigError
from diffbev.core.types import ConditionKind, EncoderMode, FusionMode

# Keys that change the generated scenes; hashed into the dataset manifest.
SCENE_KEYS = (
    "image_size",
    "bev_size",
    "bev_extent",
    "n_classes",
    "depth_min",
    "depth_max",
    "depth_bins",
    "camera_height",
    "camera_pitch",
    "fov",
    "min_vehicles",
    "max_vehicles",
    "point_fraction",
)


@dataclass
class TrainConfig:
    """Configuration of one training/evaluation run.

    Attributes:
        seed: Seed for initialization and per-iteration sampling.
        iterations: Number of optimizer steps.
        batch_size: Scenes per iteration.
        lr: Peak learning rate.
        weight_decay: Decoupled weight decay coefficient.
        warmup_iters: Linear warm-up length.
        grad_clip: Global gradient-norm clip.
        timesteps: Diffusion chain length T.
        beta_start: First noise variance.
        beta_end: Last noise variance.
        n_sample_steps: Reverse steps at evaluation/inference.
        train_refine_steps: Truncated reverse steps during training.
        train_grad_steps: Trailing training reverse steps that carry gradients.
        condition: Which BEV feature conditions the denoiser.
        fusion: How the refined feature merges with the original one.
        encoder_mode: Noisy-sample encoder inside the denoiser.
        diffusion: Whether the diffusion branch is active at all.
        detach_diffusion: Stop segmentation gradients at the refined feature.
        lambda1: Depth-loss weight.
        lambda2: Diffusion-loss weight.
        dataset: Dataset directory.
        output_dir: Directory for checkpoints and logs.
        log_every: Iterations between progress log lines.
    """

    seed: int = 0
    iterations: int = 500
    batch_size: int = 2
    lr: float = 2e-4
    weight_decay: float = 0.01
    warmup_iters: int = 150
    grad_clip: float = 10.0
    timesteps: int = 100
    beta_start: float = 1e-4
    beta_end: float = 0.02
    n_sample_steps: int = 4
    train_refine_steps: int = 4
    train_grad_steps: int = 1
    condition: ConditionKind = ConditionKind.SBEV
    fusion: FusionMode = FusionMode.CROSS_ATTENTION
    encoder_mode: EncoderMode = EncoderMode.SELF_ATTENTION
    diffusion: bool = True
    detach_diffusion: bool = False
    lambda1: float = 10.0
    lambda2: float = 1.0
    dataset: str = "data"
    output_dir: str = "runs"
    log_every: int = 10
    image_size: int = 64
    bev_size: int = 32
    bev_extent: float = 20.0
    bev_channels: int = 32
    denoiser_base: int = 32
    depth_min: float = 1.0
    depth_max: float = 17.0
    depth_bins: int = 8
    n_classes: int = 2
    camera_height: float = 1.5
    camera_pitch: float = 10.0
    fov: float = 90.0
    min_vehicles: int = 1
    max_vehicles: int = 3
    point_fraction: float = 0.5
    eval_seed: int = 1234
    workers: int = 1

    def __post_init__(self) -> None:
        """Coerce enum fields and validate cross-field invariants."""
        try:
            self.condition = ConditionKind(self.condition)
            self.fusion = FusionMode(self.fusion)
            self.encoder_mode = EncoderMode(self.encoder_mode)
        except ValueError as e:
            raise ConfigError(str(e)) from e
        self.validate()

    def validate(self) -> None:
        """Check invariants.

        Raises:
            ConfigError: Naming the first violated constraint.
        """
        checks = [
            (self.iterations >= 1, "iterations must be >= 1"),
            (self.warmup_iters < self.iterations, "warmup_iters must be < iterations"),
            (self.warmup_iters >= 0, "warmup_iters must be >= 0"),
            (self.lr > 0, "lr must be > 0"),
            (self.weight_decay >= 0, "weight_decay must be >= 0"),
            (self.batch_size >= 1, "batch_size must be >= 1"),
            (self.grad_clip > 0, "grad_clip must be > 0"),
            (self.timesteps >= 1, "timesteps must be >= 1"),
            (0 < self.beta_start <= self.beta_end < 1, "need 0 < beta_start <= beta_end < 1"),
            (1 <= self.n_sample_steps <= self.timesteps, "n_sample_steps must be in [1, timesteps]"),
            (1 <= self.train_refine_steps <= self.timesteps, "train_refine_steps must be in [1, timesteps]"),
            (1 <= self.train_grad_steps <= self.train_refine_steps, "train_grad_steps must be in [1, train_refine_steps]"),
            (self.lambda1 >= 0 and self.lambda2 >= 0, "lambda1 and lambda2 must be >= 0"),
            (self.image_size >= 8 and self.image_size % 8 == 0, "image_size must be a positive multiple of 8"),
            (self.bev_size >= 4 and self.bev_size % 4 == 0, "bev_size must be a positive multiple of 4"),
            (self.bev_extent > 0, "bev_extent must be > 0"),
            (self.bev_channels >= 1 and self.denoiser_base >= 1, "bev_channels and denoiser_base must be >= 1"),
            (0 < self.depth_min < self.depth_max, "need 0 < depth_min < depth_max"),
            (self.depth_bins >= 1, "depth_bins must be >= 1"),
            (1 <= self.n_classes <= 8, "n_classes must be in [1, 8]"),
            (0 < self.fov < 180, "fov must be in (0, 180) degrees"),
            (0 <= self.min_vehicles <= self.max_vehicles, "need 0 <= min_vehicles <= max_vehicles"),
            (0 < self.point_fraction <= 1, "point_fraction must be in (0, 1]"),
            (self.log_every >= 1 and self.workers >= 1, "log_every and workers must be >= 1"),
        ]
        for ok, message in checks:
            if not ok:
                raise ConfigError(message)

    @property
    def feature_size(self) -> int:
        """Backbone feature-map side (1/8 of the image)."""
        return self.image_size // 8

    @property
    def scene_hash(self) -> str:
        """SHA-256 over the scene-generation keys."""
        text = "\n".join(f"{key} = {_format_value(getattr(self, key))}" for key in SCENE_KEYS)
        return hashlib.sha256(text.encode("utf-8")).hexdigest()

    def replace(self, **changes: Any) -> TrainConfig:
        return dataclasses.replace(self, **changes)


_FIELDS = {f.name: f for f in dataclasses.fields(TrainConfig)}
_DEFAULTS = TrainConfig()


def _format_value(value: Any) -> str:
    if isinstance(value, Enum):
        return str(value.value)
    if isinstance(value, bool):
        return "true" if value else "false"
    return repr(value) if isinstance(value, float) else str(value)


def _parse_value(key: str, raw: str) -> Any:
    default = getattr(_DEFAULTS, key)
    try:
        if isinstance(default, Enum):
            return type(default)(raw.lower())
        if isinstance(default, bool):
            if raw.lower() not in ("true", "false"):
                raise ValueError(f"expected true or false, got {raw!r}")
            return raw.lower() == "true"
        if isinstance(default, int):
            return int(raw)
        if isinstance(default, float):
            return float(raw)
    except ValueError as e:
        raise ConfigError(f"invalid value for {key}: {e}") from e
    return raw


def parse_config(text: str, **overrides: Any) -> TrainConfig:
    """Parse `key = value` lines into a TrainConfig.

    Blank lines and `#` comments are ignored; missing keys keep their
    defaults.

    Raises:
        ConfigError: On malformed lines, unknown keys or invalid values.
    """
    values: dict[str, Any] = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {line.strip()!r}")
        key, raw = (part.strip() for part in stripped.split("=", 1))
        if key not in _FIELDS:
            raise ConfigError(f"line {lineno}: unknown config key {key!r}")
        values[key] = _parse_value(key, raw)
    for key in overrides:
        if key not in _FIELDS:
            raise ConfigError(f"unknown config key {key!r}")
    values.update(overrides)
    return TrainConfig(**values)


def format_config(config: TrainConfig) -> str:
    """Render every key, in declaration order."""
    lines = [f"{name} = {_format_value(getattr(config, name))}" for name in _FIELDS]
    return "\n".join(lines) + "\n"


def load_config(path: Path, **overrides: Any) -> TrainConfig:
    """Load a config file.

    Raises:
        ConfigError: If the file cannot be read or is invalid.
    """
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as e:
        raise ConfigError(f"cannot read config {path}: {e}") from e
    return parse_config(text, **overrides)


def save_config(config: TrainConfig, path: Path) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(format_config(config), encoding="utf-8")
