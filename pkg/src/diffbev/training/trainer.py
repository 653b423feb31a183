"""End-to-end training loop.

This module provides:
- Trainer: one model, optimizer and dataset stepped iteration by iteration
- TrainResult: final checkpoint, log file and loss history
- train: convenience wrapper used by the CLI and the ablation harness
"""

from __future__ import annotations

import csv
import logging
import time
from collections.abc import Sequence
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import numpy.typing as npt

from diffbev.core.config import TrainConfig
from diffbev.core.errors import ConfigError, NumericalError
from diffbev.core.tensor import Tape, Tensor
from diffbev.data.dataset import TrainingSample
from diffbev.model.losses import LossWeights, class_weights
from diffbev.model.pipeline import DiffBEV
from diffbev.training.checkpoint import Checkpoint, save_checkpoint
from diffbev.training.optim import AdamW, clip_grad_norm, lr_at

logger = logging.getLogger(__name__)

LOG_COLUMNS = ("iter", "lr", "l_wce", "l_depth", "l_diff", "l_total", "wall_ms")
CHECKPOINT_NAME = "checkpoint.dbt"
LOG_NAME = "train_log.csv"


def iteration_rng(seed: int, iteration: int) -> np.random.Generator:
    """Generator for one iteration; independent of how training got there."""
    return np.random.default_rng([seed, iteration])


def training_class_weights(samples: Sequence[TrainingSample]) -> npt.NDArray[np.float64]:
    labels = np.stack([s.scene.bev_labels for s in samples])
    masks = np.stack([s.scene.valid_mask for s in samples])
    # Rounded through float32 so a resumed run sees the checkpointed values.
    return class_weights(labels, masks).astype(np.float32).astype(np.float64)


@dataclass
class TrainResult:
    """Outcome of a training run."""

    checkpoint: Checkpoint
    checkpoint_path: Path | None
    log_path: Path | None
    history: list[dict[str, float]] = field(default_factory=list)


class Trainer:
    """Steps a DiffBEV model over a fixed training set.

    Each iteration draws its batch, timesteps and noise from
    iteration_rng(seed, iteration), so a run resumed from a checkpoint
    replays exactly the iterations an uninterrupted run would.
    """

    def __init__(
        self,
        config: TrainConfig,
        samples: Sequence[TrainingSample],
        resume: Checkpoint | None = None,
    ) -> None:
        if not samples:
            raise ConfigError("training needs at least one sample")
        self.config = config
        self.samples = list(samples)
        if resume is not None:
            self.model = resume.build_model()
            self.model.config = config
            self.optimizer = resume.build_optimizer(self.model)
            self.class_weights = resume.class_weights
            self.iteration = resume.iteration
        else:
            self.model = DiffBEV(config, np.random.default_rng(config.seed))
            self.optimizer = AdamW(self.model.named_parameters(), weight_decay=config.weight_decay)
            self.class_weights = training_class_weights(self.samples)
            self.iteration = 0
        self.weights = LossWeights(lambda1=config.lambda1, lambda2=config.lambda2, class_weights=self.class_weights)

    def batch_indices(self, rng: np.random.Generator) -> npt.NDArray[np.int64]:
        n = len(self.samples)
        size = self.config.batch_size
        return rng.choice(n, size=size, replace=size > n)

    def step(self) -> dict[str, float]:
        """Run one optimizer step and return the batch-averaged loss components.

        Raises:
            NumericalError: If a loss component or the gradient norm is not finite.
        """
        config = self.config
        rng = iteration_rng(config.seed, self.iteration)
        lr = lr_at(self.iteration, config.lr, config.warmup_iters, config.iterations)
        self.model.train()
        self.optimizer.zero_grad()

        indices = self.batch_indices(rng)
        scale = 1.0 / len(indices)
        components = {"l_wce": 0.0, "l_depth": 0.0, "l_diff": 0.0, "l_total": 0.0}
        with Tape() as tape:
            total: Tensor | None = None
            for index in indices:
                sample = self.samples[int(index)]
                try:
                    loss, parts = self.model.training_losses(
                        sample.scene.image,
                        sample.scene.bev_labels,
                        sample.scene.valid_mask,
                        sample.depth_target,
                        sample.depth_mask,
                        self.weights,
                        rng,
                    )
                except NumericalError as e:
                    logger.error(f"Iteration {self.iteration}: {e}")
                    raise NumericalError(f"iteration {self.iteration}: {e}", component=e.component) from e
                total = loss * scale if total is None else total + loss * scale
                for name, value in parts.items():
                    components[name] += value * scale
            assert total is not None
            tape.backward(total)

        clip_grad_norm(self.model.parameters(), config.grad_clip)
        self.optimizer.step(lr)
        self.iteration += 1
        return {"lr": lr, **components}

    def checkpoint(self) -> Checkpoint:
        return Checkpoint.capture(self.model, self.optimizer, self.class_weights, self.iteration)

    def run(self, out_dir: Path | None = None) -> TrainResult:
        """Train until config.iterations, writing the log and final checkpoint to out_dir.

        A resumed run appends to an existing log.
        """
        config = self.config
        log_path = out_dir / LOG_NAME if out_dir is not None else None
        history: list[dict[str, float]] = []
        writer = None
        handle = None
        if log_path is not None:
            log_path.parent.mkdir(parents=True, exist_ok=True)
            append = self.iteration > 0 and log_path.exists()
            handle = log_path.open("a" if append else "w", newline="", encoding="utf-8")
            writer = csv.writer(handle)
            if not append:
                writer.writerow(LOG_COLUMNS)

        logger.info(f"Training from iteration {self.iteration} to {config.iterations} on {len(self.samples)} scenes")
        try:
            while self.iteration < config.iterations:
                it = self.iteration
                start = time.perf_counter()
                row = self.step()
                wall_ms = (time.perf_counter() - start) * 1000.0
                history.append({"iter": float(it), **row, "wall_ms": wall_ms})
                if writer is not None:
                    writer.writerow(
                        [it, f"{row['lr']:.6e}", *(f"{row[k]:.6f}" for k in ("l_wce", "l_depth", "l_diff", "l_total")), f"{wall_ms:.1f}"]
                    )
                if (it + 1) % config.log_every == 0 or it + 1 == config.iterations:
                    logger.info(
                        f"iter {it + 1}/{config.iterations} lr={row['lr']:.2e} "
                        f"l_wce={row['l_wce']:.4f} l_depth={row['l_depth']:.4f} "
                        f"l_diff={row['l_diff']:.4f} l_total={row['l_total']:.4f}"
                    )
        finally:
            if handle is not None:
                handle.close()

        checkpoint = self.checkpoint()
        checkpoint_path = None
        if out_dir is not None:
            checkpoint_path = out_dir / CHECKPOINT_NAME
            save_checkpoint(checkpoint_path, checkpoint)
        return TrainResult(checkpoint=checkpoint, checkpoint_path=checkpoint_path, log_path=log_path, history=history)


def train(
    config: TrainConfig,
    samples: Sequence[TrainingSample],
    out_dir: Path | None = None,
    resume: Checkpoint | None = None,
) -> TrainResult:
    """Train a model; resume continues a checkpoint with its own config.

    Raises:
        ConfigError: If the resume checkpoint was trained with a different scene setup.
        NumericalError: On a non-finite loss, naming the component.
    """
    if resume is not None and resume.config.scene_hash != config.scene_hash:
        raise ConfigError("resume checkpoint was trained on a different scene configuration")
    trainer = Trainer(resume.config.replace(iterations=config.iterations) if resume else config, samples, resume)
    return trainer.run(out_dir)
