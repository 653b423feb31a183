"""Full-inference evaluation over a dataset."""

from __future__ import annotations

import logging
from collections.abc import Sequence
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np
import numpy.typing as npt

from diffbev.core import functional as F
from diffbev.core.errors import DatasetError
from diffbev.core.tensor import Tensor, no_grad
from diffbev.data.dataset import load_dataset
from diffbev.data.metrics import MetricAccumulator, MetricReport
from diffbev.data.scene import CLASS_KINDS, SceneSample
from diffbev.model.pipeline import DiffBEV
from diffbev.training.checkpoint import load_checkpoint

logger = logging.getLogger(__name__)


def class_names(n_classes: int) -> list[str]:
    return [kind.name for kind in CLASS_KINDS[:n_classes]]


def predict(model: DiffBEV, image: npt.ArrayLike, rng: np.random.Generator, n_steps: int | None = None) -> npt.NDArray[np.float64]:
    """Per-class occupancy probabilities M×H×W for one image."""
    model.eval()
    with no_grad():
        logits = model(Tensor(image), rng, n_steps)
        return F.sigmoid(logits).data.astype(np.float64)


def evaluate(model: DiffBEV, samples: Sequence[SceneSample], workers: int = 1) -> MetricReport:
    """Run full inference on every sample and reduce the metrics.

    Sample i refines with its own generator seeded by (eval_seed, i), so
    the report does not depend on the worker count.

    Raises:
        DatasetError: If samples is empty.
    """
    if not samples:
        raise DatasetError("cannot evaluate on an empty dataset")
    config = model.config
    model.eval()

    def run(index: int) -> npt.NDArray[np.float64]:
        rng = np.random.default_rng([config.eval_seed, index])
        return predict(model, samples[index].image, rng, config.n_sample_steps)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            probs = list(pool.map(run, range(len(samples))))
    else:
        probs = [run(i) for i in range(len(samples))]

    accumulator = MetricAccumulator(class_names(config.n_classes))
    for sample, p in zip(samples, probs, strict=True):
        accumulator.add(p, sample.bev_labels, sample.valid_mask)
    report = accumulator.report()
    logger.info(f"Evaluated {len(samples)} scenes: mIoU={report.miou:.4f} mAP={report.map:.4f}")
    return report


def evaluate_checkpoint(checkpoint_path: Path, data_dir: Path, out_path: Path | None = None, workers: int = 1) -> MetricReport:
    """Evaluate a saved checkpoint on a dataset directory and optionally write the CSV.

    Raises:
        DatasetError: If the dataset is missing, empty or generated with a
            different scene configuration.
    """
    checkpoint = load_checkpoint(checkpoint_path)
    samples = load_dataset(data_dir, checkpoint.config)
    report = evaluate(checkpoint.build_model(), samples, workers=workers)
    if out_path is not None:
        report.write_csv(out_path)
        logger.info(f"Wrote report to {out_path}")
    return report
