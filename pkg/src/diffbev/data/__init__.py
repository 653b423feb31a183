"""Data module - Synthetic scenes, on-disk datasets and segmentation metrics."""

from diffbev.data.dataset import (
    Manifest,
    TrainingSample,
    load_dataset,
    load_scene,
    prepare_training,
    save_scene,
    write_dataset,
)
from diffbev.data.metrics import MetricAccumulator, MetricReport, average_precision, iou
from diffbev.data.scene import CLASS_KINDS, SceneLayout, SceneSample, SceneSpec, generate_scene

__all__ = [
    # Scenes
    "CLASS_KINDS",
    "SceneLayout",
    "SceneSample",
    "SceneSpec",
    "generate_scene",
    # Datasets
    "Manifest",
    "TrainingSample",
    "load_dataset",
    "load_scene",
    "prepare_training",
    "save_scene",
    "write_dataset",
    # Metrics
    "MetricAccumulator",
    "MetricReport",
    "average_precision",
    "iou",
]
