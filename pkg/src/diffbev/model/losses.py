"""Training objective: weighted BCE segmentation, depth BCE and noise MSE.

This module provides:
- LossWeights: λ₁ (depth), λ₂ (diffusion) and per-class weights w_c
- loss_wce, loss_depth, loss_diff: the three terms
- loss_total: weighted sum with finiteness checks
- class_weights: inverse-frequency w_c from training labels
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import numpy.typing as npt

from diffbev.core import functional as F
from diffbev.core.errors import ConfigError, NumericalError, ShapeError
from diffbev.core.tensor import Tensor, reduce_sum

LOG_CLAMP = 1e-7
DEFAULT_LAMBDA1 = 10.0
DEFAULT_LAMBDA2 = 1.0
WEIGHT_MIN = 0.1
WEIGHT_MAX = 10.0

ArrayLike = npt.ArrayLike


@dataclass
class LossWeights:
    """Loss weighting: L = L_wce + λ₁·L_depth + λ₂·L_diff."""

    lambda1: float = DEFAULT_LAMBDA1
    lambda2: float = DEFAULT_LAMBDA2
    class_weights: npt.NDArray[np.float64] = field(default_factory=lambda: np.ones(2))

    def __post_init__(self) -> None:
        self.class_weights = np.asarray(self.class_weights, dtype=np.float64)
        if self.lambda1 < 0 or self.lambda2 < 0:
            raise ConfigError(f"loss weights must be >= 0, got {self.lambda1}, {self.lambda2}")
        if (self.class_weights <= 0).any():
            raise ConfigError("class weights must be > 0")


def _bce_terms(p: Tensor) -> tuple[Tensor, Tensor]:
    return F.log(p, LOG_CLAMP), F.log(1.0 - p, LOG_CLAMP)


def loss_wce(logits: Tensor, labels: ArrayLike, valid_mask: ArrayLike, weights: ArrayLike) -> Tensor:
    """Class-weighted binary cross entropy over valid BEV cells.

    Per class c: (w_c/N_pos_c)·[−Σ_pos log p − Σ_neg log(1 − p)], with
    p = sigmoid(logit). A class without positives is normalized by the
    number of valid cells instead.

    Args:
        logits: M×H×W class scores.
        labels: M×H×W {0, 1} targets.
        valid_mask: H×W mask of evaluated cells.
        weights: M class weights.
    """
    y = np.asarray(labels, dtype=np.float64)
    valid = np.asarray(valid_mask, dtype=np.float64)
    w = np.asarray(weights, dtype=np.float64).reshape(-1)
    if y.shape != logits.shape or valid.shape != logits.shape[1:] or w.shape != (logits.shape[0],):
        raise ShapeError(f"loss_wce shapes disagree: logits {logits.shape}, labels {y.shape}, mask {valid.shape}, weights {w.shape}")
    pos = y * valid
    neg = (1.0 - y) * valid
    n_pos = pos.sum(axis=(1, 2))
    n_valid = valid.sum()
    norm = np.where(n_pos > 0, n_pos, max(n_valid, 1.0))
    coef = (w / norm)[:, None, None]
    log_p, log_q = _bce_terms(F.sigmoid(logits))
    return -reduce_sum(log_p * (coef * pos) + log_q * (coef * neg))


def loss_depth(depth: Tensor, target: ArrayLike, valid_mask: ArrayLike) -> Tensor:
    """Mean binary cross entropy between depth probabilities and one-hot bins.

    Predictions at feature resolution are bilinearly upsampled to the
    target resolution first. No valid pixel gives a zero loss.

    Args:
        depth: n_bins×h×w probabilities (per-pixel softmax).
        target: n_bins×H×W one-hot ground truth.
        valid_mask: H×W pixels hit by at least one point.
    """
    onehot = np.asarray(target, dtype=np.float64)
    valid = np.asarray(valid_mask, dtype=np.float64)
    if onehot.ndim != 3 or onehot.shape[0] != depth.shape[0] or valid.shape != onehot.shape[1:]:
        raise ShapeError(f"loss_depth shapes disagree: depth {depth.shape}, target {onehot.shape}, mask {valid.shape}")
    count = valid.sum() * onehot.shape[0]
    if count == 0:
        return reduce_sum(depth) * 0.0
    probs = depth if depth.shape == onehot.shape else F.bilinear_interpolate(depth, (onehot.shape[1], onehot.shape[2]))
    log_p, log_q = _bce_terms(probs)
    pos = onehot * valid[None]
    neg = (1.0 - onehot) * valid[None]
    return -reduce_sum(log_p * (pos / count) + log_q * (neg / count))


def loss_diff(eps_true: ArrayLike | Tensor, eps_hat: Tensor) -> Tensor:
    """Mean squared error between the injected and predicted noise."""
    residual = eps_hat - eps_true
    if residual.shape != eps_hat.shape:
        raise ShapeError(f"noise shapes disagree: {np.shape(eps_true)} vs {eps_hat.shape}")
    return F.mean_squared(residual)


def loss_total(
    l_wce: Tensor,
    l_depth: Tensor,
    l_diff: Tensor,
    weights: LossWeights,
) -> tuple[Tensor, dict[str, float]]:
    """L = L_wce + λ₁·L_depth + λ₂·L_diff.

    Returns:
        (total, components) where components holds l_wce, l_depth, l_diff, l_total.

    Raises:
        NumericalError: If any part is not finite, naming it.
    """
    parts = {"l_wce": l_wce, "l_depth": l_depth, "l_diff": l_diff}
    for name, part in parts.items():
        if not math.isfinite(part.item()):
            raise NumericalError(f"non-finite loss component {name} = {part.item()}", component=name)
    total = l_wce + l_depth * weights.lambda1 + l_diff * weights.lambda2
    components = {name: part.item() for name, part in parts.items()}
    components["l_total"] = total.item()
    return total, components


def class_weights(labels: ArrayLike, valid_masks: ArrayLike) -> npt.NDArray[np.float64]:
    """Inverse positive frequency per class, normalized to mean 1, clipped to [0.1, 10].

    Args:
        labels: S×M×H×W stacked training labels.
        valid_masks: S×H×W stacked masks.
    """
    y = np.asarray(labels, dtype=np.float64)
    valid = np.asarray(valid_masks, dtype=np.float64)
    positives = (y * valid[:, None]).sum(axis=(0, 2, 3))
    total = max(valid.sum(), 1.0)
    freq = np.maximum(positives / total, 1.0 / (total * WEIGHT_MAX))
    inverse = 1.0 / freq
    return np.clip(inverse / inverse.mean(), WEIGHT_MIN, WEIGHT_MAX)
