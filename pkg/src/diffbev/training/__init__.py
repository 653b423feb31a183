"""Training module - Optimizer, checkpoints, training loop and the evaluation harnesses."""

from diffbev.training.ablate import AblationRow, ablation_grid, run_ablation, write_ablation_csv
from diffbev.training.checkpoint import Checkpoint, load_checkpoint, save_checkpoint
from diffbev.training.evaluate import evaluate, evaluate_checkpoint, predict
from diffbev.training.gradsuite import run_gradsuite
from diffbev.training.infer import InferenceResult, infer, write_maps
from diffbev.training.optim import AdamW, clip_grad_norm, lr_at
from diffbev.training.trainer import Trainer, TrainResult, train

__all__ = [
    # Optimization
    "AdamW",
    "clip_grad_norm",
    "lr_at",
    # Checkpoints
    "Checkpoint",
    "load_checkpoint",
    "save_checkpoint",
    # Training
    "TrainResult",
    "Trainer",
    "train",
    # Evaluation
    "AblationRow",
    "InferenceResult",
    "ablation_grid",
    "evaluate",
    "evaluate_checkpoint",
    "infer",
    "predict",
    "run_ablation",
    "run_gradsuite",
    "write_ablation_csv",
]
