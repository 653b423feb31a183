"""Ablation harness over condition, fusion and encoder choices.

The grid trains every condition × fusion pair with the base encoder, then
both encoder modes with the base condition and fusion. Each run is
evaluated on its training scenes and reports parameter and
multiply-accumulate counts of one inference pass. The self-attention
encoder's count includes its feed-forward layer.
"""

from __future__ import annotations

import csv
import logging
from collections.abc import Iterator, Sequence
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from diffbev.core.config import TrainConfig
from diffbev.core.tensor import count_macs
from diffbev.core.types import ConditionKind, EncoderMode, FusionMode
from diffbev.data.dataset import TrainingSample
from diffbev.model.pipeline import DiffBEV
from diffbev.training.evaluate import evaluate, predict
from diffbev.training.trainer import train

logger = logging.getLogger(__name__)

ABLATION_COLUMNS = ("table", "condition", "fusion", "encoder", "miou", "map", "params", "gmacs")
TABLE_CONDITION_FUSION = "condition_fusion"
TABLE_ENCODER = "encoder"
TABLE_BASELINE = "baseline"


@dataclass
class AblationRow:
    table: str
    condition: str
    fusion: str
    encoder: str
    miou: float
    map: float
    params: int
    gmacs: float

    def values(self) -> list[str]:
        return [
            self.table,
            self.condition,
            self.fusion,
            self.encoder,
            f"{self.miou:.6f}",
            f"{self.map:.6f}",
            str(self.params),
            f"{self.gmacs:.6f}",
        ]


def ablation_grid(base: TrainConfig, with_baseline: bool = False) -> Iterator[tuple[str, TrainConfig]]:
    """Yield (table, config) for every run: 9 condition × fusion, 2 encoder, optional baseline."""
    for condition in ConditionKind:
        for fusion in FusionMode:
            yield TABLE_CONDITION_FUSION, base.replace(condition=condition, fusion=fusion, diffusion=True)
    for encoder in EncoderMode:
        yield TABLE_ENCODER, base.replace(encoder_mode=encoder, diffusion=True)
    if with_baseline:
        yield TABLE_BASELINE, base.replace(diffusion=False)


def inference_gmacs(model: DiffBEV) -> float:
    """Multiply-accumulates of one full inference pass, in billions."""
    size = model.config.image_size
    image = np.zeros((3, size, size), dtype=np.float32)
    with count_macs() as counter:
        predict(model, image, np.random.default_rng(0), model.config.n_sample_steps)
    return counter.total / 1e9


def run_ablation(
    base: TrainConfig,
    samples: Sequence[TrainingSample],
    out_dir: Path | None = None,
    with_baseline: bool = False,
) -> list[AblationRow]:
    """Train and evaluate every ablation configuration.

    Raises:
        NumericalError: If any run produces a non-finite loss.
    """
    rows = []
    scenes = [s.scene for s in samples]
    for index, (table, config) in enumerate(ablation_grid(base, with_baseline)):
        encoder = config.encoder_mode.value if config.diffusion else "none"
        label = f"{table}/{config.condition.value}/{config.fusion.value}/{encoder}"
        logger.info(f"Ablation run {index + 1}: {label}")
        run_dir = out_dir / f"run_{index:02d}" if out_dir is not None else None
        result = train(config, samples, out_dir=run_dir)
        model = result.checkpoint.build_model()
        report = evaluate(model, scenes)
        rows.append(
            AblationRow(
                table=table,
                condition=config.condition.value if config.diffusion else "none",
                fusion=config.fusion.value if config.diffusion else "none",
                encoder=encoder,
                miou=report.miou,
                map=report.map,
                params=model.num_parameters(),
                gmacs=inference_gmacs(model),
            )
        )
    return rows


def write_ablation_csv(rows: Sequence[AblationRow], path: Path) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f)
        writer.writerow(ABLATION_COLUMNS)
        for row in rows:
            writer.writerow(row.values())
    logger.info(f"Wrote {len(rows)} ablation rows to {path}")
