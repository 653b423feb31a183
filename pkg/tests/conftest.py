"""Shared fixtures: a tiny configuration and scenes generated from it."""

from __future__ import annotations

from collections.abc import Iterator
from pathlib import Path

import numpy as np
import pytest

from diffbev.core.config import TrainConfig
from diffbev.core.tensor import precision
from diffbev.data.dataset import TrainingSample, prepare_training, write_dataset
from diffbev.data.scene import SceneSample, SceneSpec, generate_scene

# Small enough for a full forward/backward pass in well under a second.
TINY_CONFIG = TrainConfig(
    image_size=32,
    bev_size=8,
    bev_extent=10.0,
    bev_channels=8,
    denoiser_base=8,
    depth_bins=4,
    depth_min=1.0,
    depth_max=13.0,
    timesteps=10,
    n_sample_steps=2,
    train_refine_steps=2,
    iterations=4,
    warmup_iters=1,
    log_every=1,
)

TINY_SEEDS = (0, 1, 2)


@pytest.fixture
def tiny_config() -> TrainConfig:
    """Tiny configuration shared by model and training tests."""
    return TINY_CONFIG


@pytest.fixture
def rng() -> np.random.Generator:
    """Seeded generator."""
    return np.random.default_rng(0)


@pytest.fixture
def float64() -> Iterator[None]:
    """Run the test body in 64-bit shadow mode."""
    with precision(np.float64):
        yield


@pytest.fixture(scope="session")
def tiny_scenes() -> list[SceneSample]:
    """Scenes for TINY_SEEDS under TINY_CONFIG."""
    spec = SceneSpec.from_config(TINY_CONFIG)
    return [generate_scene(seed, spec) for seed in TINY_SEEDS]


@pytest.fixture(scope="session")
def tiny_samples(tiny_scenes: list[SceneSample]) -> list[TrainingSample]:
    """tiny_scenes with depth targets attached."""
    return prepare_training(tiny_scenes)


@pytest.fixture
def tiny_dataset(tmp_path: Path) -> Path:
    """Dataset directory holding TINY_SEEDS."""
    data_dir = tmp_path / "data"
    write_dataset(data_dir, TINY_SEEDS, TINY_CONFIG)
    return data_dir
