"""Point-cloud projection and one-hot depth ground truth."""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
import numpy.typing as npt

from diffbev.core.errors import ShapeError
from diffbev.geometry.camera import CameraRig, FloatArray

logger = logging.getLogger(__name__)


@dataclass
class ProjectedPoints:
    """Points that survived the frustum test.

    Attributes:
        u: Pixel x coordinates.
        v: Pixel y coordinates.
        depth: Camera-frame depth in meters.
        n_dropped: Points filtered out (behind, too near/far, off-image).
    """

    u: FloatArray
    v: FloatArray
    depth: FloatArray
    n_dropped: int

    def __len__(self) -> int:
        return int(self.u.shape[0])


@dataclass
class DepthTarget:
    """One-hot depth ground truth and its valid-pixel mask."""

    onehot: npt.NDArray[np.float32]
    mask: npt.NDArray[np.bool_]


def project_points(rig: CameraRig, points: npt.ArrayLike) -> ProjectedPoints:
    """Project world points into the image: P_cam = R·P + t, pixel = K·P_cam / Z.

    Points are kept when d_min <= Z <= d_max and 0 <= u < W, 0 <= v < H.
    """
    pts = np.asarray(points, dtype=np.float64)
    if pts.size == 0:
        pts = np.zeros((0, 3))
    if pts.ndim != 2 or pts.shape[1] != 3:
        raise ShapeError(f"point cloud must be N×3, got {pts.shape}")
    cam = pts @ rig.R.T + rig.t
    depth = cam[:, 2]
    d_min, d_max, _ = rig.depth_bins
    in_depth = (depth >= d_min) & (depth <= d_max)
    safe = np.where(in_depth, depth, 1.0)
    pix = cam @ rig.K.T
    u = pix[:, 0] / safe
    v = pix[:, 1] / safe
    keep = in_depth & (u >= 0) & (u < rig.width) & (v >= 0) & (v < rig.height)
    dropped = int(pts.shape[0] - keep.sum())
    if dropped:
        logger.debug(f"Dropped {dropped} of {pts.shape[0]} points outside the frustum")
    return ProjectedPoints(u[keep], v[keep], depth[keep], dropped)


def depth_ground_truth(rig: CameraRig, points: npt.ArrayLike) -> DepthTarget:
    """Rasterize the nearest projected depth per pixel into one-hot bins.

    Pixels without any point are all-zero and masked out. The nearest-wins
    reduction is order-independent.

    Returns:
        DepthTarget with onehot n_bins×H_img×W_img and mask H_img×W_img.
    """
    projected = project_points(rig, points)
    width, height = rig.image_size
    nearest = np.full((height, width), np.inf)
    rows = np.floor(projected.v).astype(np.int64)
    cols = np.floor(projected.u).astype(np.int64)
    np.minimum.at(nearest, (rows, cols), projected.depth)
    mask = np.isfinite(nearest)
    onehot = np.zeros((rig.n_bins, height, width), dtype=np.float32)
    hit_rows, hit_cols = np.nonzero(mask)
    onehot[rig.bin_index(nearest[mask]), hit_rows, hit_cols] = 1.0
    return DepthTarget(onehot, mask)
