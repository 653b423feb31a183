"""Segmentation metrics: per-class IoU, average precision and their means.

This module provides:
- iou: intersection over union of two binary maps inside a valid mask
- average_precision: trapezoidal area under the precision/recall curve
- MetricAccumulator: order-independent reduction over a dataset
- MetricReport: per-class values, means and CSV output
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np
import numpy.typing as npt

from diffbev.core.errors import ShapeError

BINARIZE_THRESHOLD = 0.5


def _check_shapes(*arrays: npt.NDArray[Any]) -> None:
    shapes = {a.shape for a in arrays}
    if len(shapes) != 1:
        raise ShapeError(f"metric inputs must share a shape, got {sorted(shapes)}")


def iou(pred: npt.ArrayLike, gt: npt.ArrayLike, valid_mask: npt.ArrayLike | None = None) -> float:
    """|pred ∧ gt| / |pred ∨ gt| over valid cells; 1.0 when both are empty."""
    p = np.asarray(pred).astype(bool)
    g = np.asarray(gt).astype(bool)
    valid = np.ones_like(p) if valid_mask is None else np.asarray(valid_mask).astype(bool)
    _check_shapes(p, g, valid)
    inter = int((p & g & valid).sum())
    union = int(((p | g) & valid).sum())
    return 1.0 if union == 0 else inter / union


def average_precision(scores: npt.ArrayLike, gt: npt.ArrayLike, valid_mask: npt.ArrayLike | None = None) -> float:
    """Area under the precision/recall curve by trapezoidal integration.

    Valid cells are ranked by descending score. Tied scores form a single
    threshold, so a constant score map yields the positive prevalence. The
    curve holds one point per threshold that adds true positives, anchored
    at recall 0 with the first point's precision.

    Returns:
        AP in [0, 1], or NaN when the ground truth has no positives.
    """
    s = np.asarray(scores, dtype=np.float64)
    g = np.asarray(gt).astype(bool)
    valid = np.ones(s.shape, dtype=bool) if valid_mask is None else np.asarray(valid_mask).astype(bool)
    _check_shapes(s, g, valid)
    s, g = s[valid], g[valid]
    n_pos = int(g.sum())
    if n_pos == 0:
        return math.nan

    order = np.argsort(-s, kind="stable")
    s, g = s[order], g[order]
    tp = np.cumsum(g)
    fp = np.cumsum(~g)
    # Last index of every group of equal scores.
    ends = np.flatnonzero(np.r_[s[1:] != s[:-1], True])
    tp, fp = tp[ends], fp[ends]
    gained = np.diff(np.r_[0, tp]) > 0
    tp, fp = tp[gained], fp[gained]

    precision = tp / (tp + fp)
    recall = tp / n_pos
    precision = np.r_[precision[0], precision]
    recall = np.r_[0.0, recall]
    return float(np.sum(np.diff(recall) * (precision[1:] + precision[:-1]) / 2.0))


@dataclass
class MetricReport:
    """Per-class IoU/AP with their means.

    miou averages the classes present in the ground truth (all classes when
    none is present); map averages classes whose AP is defined.
    """

    class_names: list[str]
    per_class_iou: list[float]
    per_class_ap: list[float]
    miou: float
    map: float

    def write_csv(self, path: Path) -> None:
        path.parent.mkdir(parents=True, exist_ok=True)
        with path.open("w", newline="", encoding="utf-8") as f:
            writer = csv.writer(f)
            writer.writerow(["class", "iou", "ap"])
            for name, class_iou, class_ap in zip(self.class_names, self.per_class_iou, self.per_class_ap, strict=True):
                writer.writerow([name, f"{class_iou:.6f}", "nan" if math.isnan(class_ap) else f"{class_ap:.6f}"])
            writer.writerow(["mean", f"{self.miou:.6f}", f"{self.map:.6f}"])


@dataclass
class MetricAccumulator:
    """Sums per-class counts and gathers scores across samples.

    Counts are summed before division, so the result does not depend on the
    order samples are added.
    """

    class_names: list[str]
    intersection: npt.NDArray[np.int64] = field(init=False)
    union: npt.NDArray[np.int64] = field(init=False)
    positives: npt.NDArray[np.int64] = field(init=False)
    _scores: list[list[npt.NDArray[np.float64]]] = field(init=False, repr=False)
    _targets: list[list[npt.NDArray[np.bool_]]] = field(init=False, repr=False)

    def __post_init__(self) -> None:
        n = len(self.class_names)
        self.intersection = np.zeros(n, dtype=np.int64)
        self.union = np.zeros(n, dtype=np.int64)
        self.positives = np.zeros(n, dtype=np.int64)
        self._scores = [[] for _ in range(n)]
        self._targets = [[] for _ in range(n)]

    def add(self, probs: npt.ArrayLike, labels: npt.ArrayLike, valid_mask: npt.ArrayLike) -> None:
        """Add one sample: M×H×W probabilities, M×H×W labels, H×W mask."""
        p = np.asarray(probs, dtype=np.float64)
        y = np.asarray(labels).astype(bool)
        valid = np.asarray(valid_mask).astype(bool)
        if p.shape != y.shape or p.shape[0] != len(self.class_names) or p.shape[1:] != valid.shape:
            raise ShapeError(f"expected {len(self.class_names)}×H×W maps and an H×W mask, got {p.shape}, {y.shape}, {valid.shape}")
        pred = p > BINARIZE_THRESHOLD
        for c in range(len(self.class_names)):
            self.intersection[c] += int((pred[c] & y[c] & valid).sum())
            self.union[c] += int(((pred[c] | y[c]) & valid).sum())
            self.positives[c] += int((y[c] & valid).sum())
            self._scores[c].append(p[c][valid])
            self._targets[c].append(y[c][valid])

    def report(self) -> MetricReport:
        per_iou = [1.0 if u == 0 else float(i) / float(u) for i, u in zip(self.intersection, self.union, strict=True)]
        per_ap = [
            average_precision(np.concatenate(s), np.concatenate(t)) if s else math.nan
            for s, t in zip(self._scores, self._targets, strict=True)
        ]
        present = [v for v, n in zip(per_iou, self.positives, strict=True) if n > 0] or per_iou
        defined = [v for v in per_ap if not math.isnan(v)]
        return MetricReport(
            class_names=list(self.class_names),
            per_class_iou=per_iou,
            per_class_ap=per_ap,
            miou=float(np.mean(present)),
            map=float(np.mean(defined)) if defined else 0.0,
        )
