"""Lift-splat view transformer and the depth-derived semantic BEV feature.

This module provides:
- SplatPlan / plan_splat: BEV cell of every (bin, feature pixel) pair
- lift_splat: weight features by depth probability and sum-pool into cells
- SemanticFromDepth: 1×1 conv n_bins→C then bilinear resize to the grid
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import numpy.typing as npt

from diffbev.core import functional as F
from diffbev.core.errors import ShapeError
from diffbev.core.tensor import Tensor, reshape
from diffbev.geometry.camera import BEVGrid, CameraRig, DepthDistribution, FloatArray
from diffbev.nn.layers import Conv2d
from diffbev.nn.module import Module


@dataclass(frozen=True)
class SplatPlan:
    """Precomputed splat geometry for one rig, grid and feature size.

    Attributes:
        index: Cell id per (bin, pixel), flattened bin-major; -1 off-grid.
        points: World coordinates of the lifted points, same order.
        feature_size: (h, w) of the feature map.
        n_bins: Depth bins.
    """

    index: npt.NDArray[np.int64]
    points: FloatArray
    feature_size: tuple[int, int]
    n_bins: int


def plan_splat(rig: CameraRig, grid: BEVGrid, feature_size: tuple[int, int]) -> SplatPlan:
    """Lift every feature pixel center to each bin-center depth along its ray.

    A feature pixel (i, j) covers an s×s patch of the image, s = H_img/h;
    its ray passes through the patch center ((j + 0.5)·s_x, (i + 0.5)·s_y).
    """
    h, w = feature_size
    stride_x = rig.width / w
    stride_y = rig.height / h
    jj, ii = np.meshgrid(np.arange(w), np.arange(h))
    u = (jj.reshape(-1) + 0.5) * stride_x
    v = (ii.reshape(-1) + 0.5) * stride_y
    directions = rig.ray_directions(u, v)
    depths = rig.bin_centers
    points = rig.center[None, None, :] + depths[:, None, None] * directions[None, :, :]
    points = points.reshape(-1, 3)
    index = grid.cell_index(points[:, 0], points[:, 1])
    return SplatPlan(index=index, points=points, feature_size=(h, w), n_bins=rig.n_bins)


def lift_splat(
    features: Tensor,
    depth: DepthDistribution,
    rig: CameraRig,
    grid: BEVGrid,
    plan: SplatPlan | None = None,
) -> Tensor:
    """Build F^{O-BEV} by sum-pooling depth-weighted features into BEV cells.

    Args:
        features: C×h×w image features.
        depth: n_bins×h×w depth distribution on the same spatial grid.
        rig: Camera producing the image.
        grid: Target BEV grid.
        plan: Cached result of plan_splat for (rig, grid, (h, w)).

    Returns:
        C×H×W BEV feature, differentiable w.r.t. features and depth.

    Raises:
        ShapeError: If feature and depth spatial sizes differ.
    """
    c, h, w = features.shape
    if depth.spatial != (h, w):
        raise ShapeError(f"depth spatial size {depth.spatial} != feature size {(h, w)}")
    if depth.n_bins != rig.n_bins:
        raise ShapeError(f"depth has {depth.n_bins} bins, rig defines {rig.n_bins}")
    if plan is None:
        plan = plan_splat(rig, grid, (h, w))
    n_bins = depth.n_bins
    frustum = reshape(features, (c, 1, h * w)) * reshape(depth.probs, (1, n_bins, h * w))
    pooled = F.scatter_add(reshape(frustum, (c, n_bins * h * w)), plan.index, grid.n_cells)
    height, width = grid.resolution
    return reshape(pooled, (c, height, width))


class SemanticFromDepth(Module):
    """F^{S-BEV}: channel conversion of the depth distribution, resized to the grid."""

    def __init__(self, n_bins: int, channels: int, rng: np.random.Generator) -> None:
        super().__init__()
        self.proj = Conv2d(n_bins, channels, 1, rng)

    def forward(self, depth: DepthDistribution | Tensor, grid: BEVGrid) -> Tensor:
        probs = depth.probs if isinstance(depth, DepthDistribution) else depth
        return semantic_from_depth(probs, self.proj, grid)


def semantic_from_depth(probs: Tensor, proj: Conv2d, grid: BEVGrid) -> Tensor:
    """Apply the 1×1 conversion then bilinear interpolation to (H, W)."""
    converted = proj(probs)
    if converted.shape[1:] == grid.resolution:
        return converted
    return F.bilinear_interpolate(converted, grid.resolution)
