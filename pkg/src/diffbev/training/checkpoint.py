"""Training checkpoints stored as DBT1 archives.

Entry namespaces:
    <module>.*        model parameters and buffers (backbone.*, decoder.*, ...)
    optim.m.* / optim.v.* / optim.step
    sched.beta, sched.alpha_bar
    loss.class_weights
    meta.iteration, meta.config (u8 config text)
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Any

import numpy as np
import numpy.typing as npt

from diffbev.core.archive import entry_text, load_archive, save_archive, text_entry
from diffbev.core.config import TrainConfig, format_config, parse_config
from diffbev.core.errors import ArchiveError, ConfigError
from diffbev.model.pipeline import DiffBEV
from diffbev.training.optim import AdamW

logger = logging.getLogger(__name__)

OPTIM_PREFIX = "optim."
META_PREFIXES = ("optim.", "sched.", "loss.", "meta.")

Entries = dict[str, npt.NDArray[Any]]


@dataclass
class Checkpoint:
    """Everything needed to resume training or run inference.

    Attributes:
        config: Config snapshot of the run.
        model_state: Parameter and buffer arrays by dotted name.
        optim_state: Optimizer moments and step counter.
        class_weights: Per-class loss weights w_c.
        iteration: Completed iterations.
        beta: Noise schedule β_1..β_T.
        alpha_bar: ᾱ_1..ᾱ_T.
    """

    config: TrainConfig
    model_state: Entries
    optim_state: Entries
    class_weights: npt.NDArray[np.float64]
    iteration: int
    beta: npt.NDArray[np.float64]
    alpha_bar: npt.NDArray[np.float64]

    @classmethod
    def capture(cls, model: DiffBEV, optimizer: AdamW | None, class_weights: npt.ArrayLike, iteration: int) -> Checkpoint:
        return cls(
            config=model.config,
            model_state=model.state_dict(),
            optim_state=optimizer.state_dict() if optimizer is not None else {},
            class_weights=np.asarray(class_weights, dtype=np.float64),
            iteration=iteration,
            beta=model.schedule.beta.copy(),
            alpha_bar=model.schedule.alpha_bar.copy(),
        )

    def to_entries(self) -> Entries:
        entries: Entries = {name: np.asarray(value, dtype=np.float32) for name, value in self.model_state.items()}
        for name, value in self.optim_state.items():
            entries[OPTIM_PREFIX + name] = np.asarray(value, dtype=np.float32)
        entries["sched.beta"] = self.beta.astype(np.float32)
        entries["sched.alpha_bar"] = self.alpha_bar.astype(np.float32)
        entries["loss.class_weights"] = self.class_weights.astype(np.float32)
        entries["meta.iteration"] = np.array([self.iteration], dtype=np.float32)
        entries["meta.config"] = text_entry(format_config(self.config))
        return entries

    @classmethod
    def from_entries(cls, entries: Entries) -> Checkpoint:
        """Rebuild a checkpoint from archive entries.

        Raises:
            ArchiveError: If a required entry is missing.
        """
        required = ("sched.beta", "sched.alpha_bar", "loss.class_weights", "meta.iteration", "meta.config")
        missing = [key for key in required if key not in entries]
        if missing:
            raise ArchiveError(f"checkpoint is missing entries {missing}")
        config = parse_config(entry_text(entries["meta.config"]))
        model_state = {k: v for k, v in entries.items() if not k.startswith(META_PREFIXES)}
        optim_state = {k[len(OPTIM_PREFIX) :]: v for k, v in entries.items() if k.startswith(OPTIM_PREFIX)}
        return cls(
            config=config,
            model_state=model_state,
            optim_state=optim_state,
            class_weights=entries["loss.class_weights"].astype(np.float64),
            iteration=int(entries["meta.iteration"].reshape(-1)[0]),
            beta=entries["sched.beta"].astype(np.float64),
            alpha_bar=entries["sched.alpha_bar"].astype(np.float64),
        )

    def build_model(self) -> DiffBEV:
        """Instantiate the model of this checkpoint and load its weights.

        Raises:
            ConfigError: If the weights do not fit the configured model or
                the stored schedule disagrees with the configured one.
        """
        model = DiffBEV(self.config, np.random.default_rng(self.config.seed))
        model.load_state_dict(self.model_state)
        expected = model.schedule.beta.astype(np.float32)
        if expected.shape != self.beta.shape or not np.array_equal(expected, self.beta.astype(np.float32)):
            raise ConfigError("checkpoint noise schedule does not match its config")
        return model

    def build_optimizer(self, model: DiffBEV) -> AdamW:
        optimizer = AdamW(model.named_parameters(), weight_decay=self.config.weight_decay)
        if self.optim_state:
            optimizer.load_state_dict(self.optim_state)
        return optimizer


def save_checkpoint(path: Path, checkpoint: Checkpoint) -> None:
    save_archive(path, checkpoint.to_entries())
    logger.info(f"Saved checkpoint at iteration {checkpoint.iteration} to {path}")


def load_checkpoint(path: Path) -> Checkpoint:
    """Read a checkpoint archive.

    Raises:
        ArchiveError: If the file is malformed or incomplete.
        ConfigError: If the embedded config is invalid.
    """
    checkpoint = Checkpoint.from_entries(load_archive(path))
    logger.info(f"Loaded checkpoint {path} (iteration {checkpoint.iteration})")
    return checkpoint
