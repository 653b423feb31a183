"""On-disk datasets of synthetic scenes.

Layout:
    <dir>/scene_<seed>.dbt   one tensor archive per scene
    <dir>/manifest.txt       "config_hash = <sha256>" then one filename per line
"""

from __future__ import annotations

import logging
from collections.abc import Sequence
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import numpy.typing as npt

from diffbev.core.archive import load_archive, save_archive
from diffbev.core.config import TrainConfig
from diffbev.core.errors import ArchiveError, DatasetError
from diffbev.data.scene import SceneSample, SceneSpec, generate_scene
from diffbev.geometry.projection import depth_ground_truth

logger = logging.getLogger(__name__)

MANIFEST_NAME = "manifest.txt"
HASH_KEY = "config_hash"


def scene_filename(seed: int) -> str:
    return f"scene_{seed}.dbt"


def save_scene(path: Path, sample: SceneSample) -> None:
    save_archive(path, sample.to_entries())


def load_scene(path: Path) -> SceneSample:
    """Read one scene archive.

    Raises:
        DatasetError: If the file is missing, malformed or lacks entries.
    """
    try:
        entries = load_archive(path)
        seed = int(path.stem.split("_", 1)[1]) if path.stem.startswith("scene_") else -1
        return SceneSample.from_entries(entries, seed=seed)
    except (ArchiveError, KeyError, ValueError) as e:
        raise DatasetError(f"unreadable scene file {path}: {e}") from e


@dataclass
class Manifest:
    """Generator config hash and the scene files it produced."""

    config_hash: str
    files: list[str]

    def render(self) -> str:
        return "\n".join([f"{HASH_KEY} = {self.config_hash}", *self.files]) + "\n"

    @classmethod
    def parse(cls, text: str) -> Manifest:
        lines = [line.strip() for line in text.splitlines() if line.strip()]
        if not lines or not lines[0].startswith(HASH_KEY):
            raise DatasetError("manifest does not start with a config hash")
        return cls(config_hash=lines[0].split("=", 1)[1].strip(), files=lines[1:])


def write_dataset(out_dir: Path, seeds: Sequence[int], config: TrainConfig, workers: int = 1) -> Manifest:
    """Generate and write one archive per seed plus the manifest.

    Scenes are generated on a thread pool of `workers` threads; each worker
    owns its samples, and the manifest lists files in seed order.
    """
    out_dir.mkdir(parents=True, exist_ok=True)
    spec = SceneSpec.from_config(config)
    logger.info(f"Generating {len(seeds)} scenes into {out_dir} ({workers} workers)")

    def write_one(seed: int) -> str:
        name = scene_filename(seed)
        save_scene(out_dir / name, generate_scene(seed, spec))
        return name

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            files = list(pool.map(write_one, seeds))
    else:
        files = [write_one(seed) for seed in seeds]

    manifest = Manifest(config_hash=config.scene_hash, files=files)
    (out_dir / MANIFEST_NAME).write_text(manifest.render(), encoding="utf-8")
    logger.info(f"Wrote {len(files)} scenes, config hash {manifest.config_hash[:12]}")
    return manifest


def read_manifest(data_dir: Path) -> Manifest:
    path = data_dir / MANIFEST_NAME
    if not path.exists():
        raise DatasetError(f"no dataset at {data_dir} (missing {MANIFEST_NAME})")
    return Manifest.parse(path.read_text(encoding="utf-8"))


@dataclass
class TrainingSample:
    """A scene plus its precomputed depth ground truth."""

    scene: SceneSample
    depth_target: npt.NDArray[np.float32]
    depth_mask: npt.NDArray[np.bool_]


def load_dataset(data_dir: Path, config: TrainConfig | None = None) -> list[SceneSample]:
    """Load every scene listed in the manifest.

    Raises:
        DatasetError: On a missing or empty dataset, a config-hash mismatch
            or an unreadable scene.
    """
    manifest = read_manifest(data_dir)
    if config is not None and manifest.config_hash != config.scene_hash:
        raise DatasetError(
            f"dataset {data_dir} was generated with a different scene config "
            f"(manifest {manifest.config_hash[:12]}, config {config.scene_hash[:12]})"
        )
    if not manifest.files:
        raise DatasetError(f"dataset {data_dir} is empty")
    samples = [load_scene(data_dir / name) for name in manifest.files]
    logger.info(f"Loaded {len(samples)} scenes from {data_dir}")
    return samples


def prepare_training(samples: Sequence[SceneSample]) -> list[TrainingSample]:
    """Attach one-hot depth targets projected from each scene's points."""
    prepared = []
    for sample in samples:
        target = depth_ground_truth(sample.rig, sample.points)
        prepared.append(TrainingSample(scene=sample, depth_target=target.onehot, depth_mask=target.mask))
    return prepared
