"""Fixtures for end-to-end runs on generated datasets."""

from __future__ import annotations

from pathlib import Path

import pytest

from diffbev.core.config import TrainConfig
from diffbev.data.dataset import TrainingSample, load_dataset, prepare_training, write_dataset

OVERFIT_SCENES = 8
OVERFIT_ITERATIONS = 500


@pytest.fixture(scope="module")
def overfit_config() -> TrainConfig:
    """Default configuration with the overfit iteration count."""
    return TrainConfig(iterations=OVERFIT_ITERATIONS)


@pytest.fixture(scope="module")
def overfit_samples(tmp_path_factory: pytest.TempPathFactory, overfit_config: TrainConfig) -> list[TrainingSample]:
    """Eight default-config scenes written to disk and loaded back."""
    data_dir = tmp_path_factory.mktemp("overfit") / "data"
    write_dataset(data_dir, range(OVERFIT_SCENES), overfit_config, workers=4)
    return prepare_training(load_dataset(data_dir, overfit_config))


@pytest.fixture
def tiny_workspace(tmp_path: Path, tiny_config: TrainConfig) -> TrainConfig:
    """Tiny configuration whose dataset and outputs live in tmp_path."""
    return tiny_config.replace(dataset=str(tmp_path / "data"), output_dir=str(tmp_path / "runs"))
