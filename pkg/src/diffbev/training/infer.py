"""Single-scene inference with image dumps.

Writes one grayscale PGM per class (probability × 255) and a palette PPM
of the per-cell argmax class. Image rows follow BEV grid rows.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import numpy.typing as npt
from PIL import Image

from diffbev.data.dataset import load_scene
from diffbev.data.scene import CLASS_KINDS
from diffbev.training.checkpoint import load_checkpoint
from diffbev.training.evaluate import predict

logger = logging.getLogger(__name__)


@dataclass
class InferenceResult:
    """Probabilities, argmax map and the files written for one scene."""

    probs: npt.NDArray[np.float64]
    argmax: npt.NDArray[np.int64]
    class_maps: list[Path] = field(default_factory=list)
    composite: Path | None = None


def to_gray(probs: npt.NDArray[np.float64]) -> npt.NDArray[np.uint8]:
    return np.round(np.clip(probs, 0.0, 1.0) * 255.0).astype(np.uint8)


def palette_image(argmax: npt.NDArray[np.int64]) -> npt.NDArray[np.uint8]:
    """H×W×3 colors of each cell's class."""
    palette = np.array([kind.color for kind in CLASS_KINDS], dtype=np.float64)
    return np.round(palette[argmax] * 255.0).astype(np.uint8)


def write_maps(probs: npt.NDArray[np.float64], out_dir: Path) -> InferenceResult:
    """Write per-class PGMs and the argmax PPM for M×H×W probabilities."""
    out_dir.mkdir(parents=True, exist_ok=True)
    argmax = np.argmax(probs, axis=0)
    result = InferenceResult(probs=probs, argmax=argmax)
    for c in range(probs.shape[0]):
        path = out_dir / f"class_{c}_{CLASS_KINDS[c].name}.pgm"
        Image.fromarray(to_gray(probs[c])).save(path, format="PPM")
        result.class_maps.append(path)
    result.composite = out_dir / "argmax.ppm"
    Image.fromarray(palette_image(argmax)).save(result.composite, format="PPM")
    return result


def infer(checkpoint_path: Path, scene_path: Path, out_dir: Path) -> InferenceResult:
    """Run full inference on one scene file and write its maps.

    Raises:
        ArchiveError: If the checkpoint is unreadable.
        DatasetError: If the scene file is unreadable.
    """
    checkpoint = load_checkpoint(checkpoint_path)
    scene = load_scene(scene_path)
    model = checkpoint.build_model()
    config = checkpoint.config
    probs = predict(model, scene.image, np.random.default_rng(config.eval_seed), config.n_sample_steps)
    result = write_maps(probs, out_dir)
    logger.info(f"Wrote {len(result.class_maps)} class maps and {result.composite} for {scene_path}")
    return result
