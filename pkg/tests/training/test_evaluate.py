"""Tests for full-inference evaluation."""

from __future__ import annotations

import csv
from pathlib import Path

import numpy as np
import numpy.typing as npt
import pytest

from diffbev.core import functional as F
from diffbev.core.config import TrainConfig
from diffbev.core.errors import DatasetError
from diffbev.core.tensor import Tensor, no_grad
from diffbev.data.dataset import TrainingSample
from diffbev.data.scene import SceneSample
from diffbev.model.pipeline import DiffBEV
from diffbev.training import evaluate as evaluate_module
from diffbev.training.checkpoint import Checkpoint, save_checkpoint
from diffbev.training.evaluate import class_names, evaluate, evaluate_checkpoint, predict
from diffbev.training.trainer import Trainer


@pytest.fixture
def model(tiny_config: TrainConfig) -> DiffBEV:
    """Untrained tiny model."""
    return DiffBEV(tiny_config, np.random.default_rng(0))


class TestPredict:
    """Tests for predict()."""

    def test_probabilities(self, model: DiffBEV, tiny_scenes: list[SceneSample], tiny_config: TrainConfig) -> None:
        """Should return M×H×W values in (0, 1)."""
        probs = predict(model, tiny_scenes[0].image, np.random.default_rng(0))
        assert probs.shape == (tiny_config.n_classes, tiny_config.bev_size, tiny_config.bev_size)
        assert ((probs > 0) & (probs < 1)).all()

    def test_seeded(self, model: DiffBEV, tiny_scenes: list[SceneSample]) -> None:
        """Equal generators should give equal predictions."""
        a = predict(model, tiny_scenes[0].image, np.random.default_rng(5))
        b = predict(model, tiny_scenes[0].image, np.random.default_rng(5))
        np.testing.assert_array_equal(a, b)


class TestEvaluate:
    """Tests for evaluate()."""

    def test_perfect_predictions(self, model: DiffBEV, tiny_scenes: list[SceneSample], monkeypatch: pytest.MonkeyPatch) -> None:
        """Predicting the labels themselves should score mIoU 1 and mAP 1."""
        labels = {id(s.image): s.bev_labels for s in tiny_scenes}

        def oracle(model: DiffBEV, image: npt.ArrayLike, rng: np.random.Generator, n_steps: int | None = None) -> npt.NDArray[np.float64]:
            return labels[id(image)].astype(np.float64)

        monkeypatch.setattr(evaluate_module, "predict", oracle)
        report = evaluate(model, tiny_scenes)
        assert report.miou == 1.0
        assert report.map == 1.0

    def test_report_shape(self, model: DiffBEV, tiny_scenes: list[SceneSample], tiny_config: TrainConfig) -> None:
        """Should report one IoU and AP per class, named after the palette."""
        report = evaluate(model, tiny_scenes)
        assert report.class_names == class_names(tiny_config.n_classes)
        assert len(report.per_class_iou) == len(report.per_class_ap) == tiny_config.n_classes
        assert 0.0 <= report.miou <= 1.0

    def test_independent_of_workers(self, model: DiffBEV, tiny_scenes: list[SceneSample]) -> None:
        """Threaded evaluation should reproduce the serial report."""
        assert evaluate(model, tiny_scenes, workers=1) == evaluate(model, tiny_scenes, workers=3)

    def test_empty(self, model: DiffBEV) -> None:
        """Should refuse an empty sample list."""
        with pytest.raises(DatasetError, match="empty"):
            evaluate(model, [])


class TestEvaluateCheckpoint:
    """Tests for evaluate_checkpoint()."""

    def test_writes_report(self, model: DiffBEV, tiny_dataset: Path, tmp_path: Path) -> None:
        """Should score the dataset and write the per-class CSV."""
        ckpt = tmp_path / "ckpt.dbt"
        save_checkpoint(ckpt, Checkpoint.capture(model, None, np.ones(model.config.n_classes), iteration=0))
        out = tmp_path / "report.csv"
        report = evaluate_checkpoint(ckpt, tiny_dataset, out)
        with out.open(encoding="utf-8") as f:
            rows = list(csv.reader(f))
        assert rows[0] == ["class", "iou", "ap"]
        assert [r[0] for r in rows[1:-1]] == report.class_names
        assert rows[-1][0] == "mean"
        assert float(rows[-1][1]) == pytest.approx(report.miou, abs=1e-6)

    def test_scene_config_mismatch(self, tiny_config: TrainConfig, tiny_dataset: Path, tmp_path: Path) -> None:
        """A checkpoint with a different scene setup should not evaluate the dataset."""
        other = DiffBEV(tiny_config.replace(bev_size=4), np.random.default_rng(0))
        ckpt = tmp_path / "ckpt.dbt"
        save_checkpoint(ckpt, Checkpoint.capture(other, None, np.ones(2), iteration=0))
        with pytest.raises(DatasetError, match="different scene config"):
            evaluate_checkpoint(ckpt, tiny_dataset)


class TestTrainEvalConsistency:
    """Evaluation should run the network the way training ran it."""

    def test_default_chain_lengths_match(self) -> None:
        """The default inference chain should be as long as the training chain."""
        config = TrainConfig()
        assert config.n_sample_steps == config.train_refine_steps

    def test_model_keeps_no_running_statistics(self, model: DiffBEV) -> None:
        """Every norm in the model should normalize with per-sample statistics."""
        assert list(model.named_buffers()) == []

    def test_predictions_match_training_forward(self, tiny_config: TrainConfig, tiny_samples: list[TrainingSample]) -> None:
        """After a few steps, predict() should reproduce the training-mode forward pass."""
        trainer = Trainer(tiny_config, tiny_samples)
        for _ in range(3):
            trainer.step()
        model = trainer.model
        image = tiny_samples[0].scene.image

        model.train()
        with no_grad():
            features = model.encode_bev(Tensor(image))
            fused = model.refine_and_fuse(
                features, np.random.default_rng(9), tiny_config.train_refine_steps, tiny_config.train_grad_steps
            )
            training_probs = F.sigmoid(model.decoder(fused)).data
        eval_probs = predict(model, image, np.random.default_rng(9), tiny_config.n_sample_steps)

        assert not model.training
        np.testing.assert_allclose(eval_probs, training_probs, rtol=1e-6, atol=1e-7)
