"""Camera rig, BEV grid and depth-distribution types.

Conventions:
- World: x right, y forward, z up (meters); the ego sits at the origin.
- Camera: X right, Y down, Z forward; depth is the camera-frame Z.
- BEV cells: columns follow x, rows follow y, row 0 at y_min; the grid is
  centered on the ego.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any

import numpy as np
import numpy.typing as npt

from diffbev.core.config import TrainConfig
from diffbev.core.errors import ConfigError, ShapeError
from diffbev.core.tensor import Tensor

FloatArray = npt.NDArray[np.float64]

ORTHONORMAL_TOL = 1e-5
SIMPLEX_TOL = 1e-5


def _as_f32_exact(value: npt.ArrayLike, shape: tuple[int, ...], name: str) -> FloatArray:
    # Values are rounded through float32 so archive round trips are exact.
    array = np.asarray(value, dtype=np.float32).astype(np.float64)
    if array.shape != shape:
        raise ConfigError(f"{name} must have shape {shape}, got {array.shape}")
    return array


@dataclass
class CameraRig:
    """Pinhole camera: intrinsics K, world→camera rotation R, translation t.

    A world point P maps to camera coordinates R·P + t and to pixels via K.

    Attributes:
        K: 3×3 intrinsics in pixels.
        R: 3×3 orthonormal rotation (world→camera).
        t: Translation in meters.
        image_size: (W_img, H_img) in pixels.
        depth_bins: (d_min, d_max, n_bins) uniform metric bins.
    """

    K: FloatArray
    R: FloatArray
    t: FloatArray
    image_size: tuple[int, int]
    depth_bins: tuple[float, float, int]
    K_inv: FloatArray = field(init=False, repr=False)

    def __post_init__(self) -> None:
        self.K = _as_f32_exact(self.K, (3, 3), "K")
        self.R = _as_f32_exact(self.R, (3, 3), "R")
        self.t = _as_f32_exact(self.t, (3,), "t")
        d_min, d_max, n_bins = self.depth_bins
        self.depth_bins = (float(np.float32(d_min)), float(np.float32(d_max)), int(n_bins))
        self.image_size = (int(self.image_size[0]), int(self.image_size[1]))

        if not np.array_equal(self.K[2], [0.0, 0.0, 1.0]) or self.K[0, 0] <= 0 or self.K[1, 1] <= 0:
            raise ConfigError(f"invalid intrinsics K={self.K.tolist()}")
        if np.abs(self.R.T @ self.R - np.eye(3)).max() > ORTHONORMAL_TOL:
            raise ConfigError("rotation R is not orthonormal")
        if not (0 < self.depth_bins[0] < self.depth_bins[1]) or self.depth_bins[2] < 1:
            raise ConfigError(f"invalid depth bins {self.depth_bins}")
        if min(self.image_size) < 1:
            raise ConfigError(f"invalid image size {self.image_size}")
        self.K_inv = np.linalg.inv(self.K)

    @classmethod
    def from_pinhole(
        cls,
        image_size: int,
        fov: float,
        height: float,
        pitch: float,
        depth_min: float,
        depth_max: float,
        n_bins: int,
    ) -> CameraRig:
        """Forward-looking square camera at the ego origin.

        Args:
            image_size: Image side in pixels.
            fov: Horizontal field of view in degrees.
            height: Mounting height above the ground plane in meters.
            pitch: Downward tilt in degrees.
            depth_min: Nearest depth bin edge.
            depth_max: Farthest depth bin edge.
            n_bins: Number of depth bins.
        """
        focal = (image_size / 2.0) / math.tan(math.radians(fov) / 2.0)
        c = image_size / 2.0
        K = np.array([[focal, 0.0, c], [0.0, focal, c], [0.0, 0.0, 1.0]])
        s, co = math.sin(math.radians(pitch)), math.cos(math.radians(pitch))
        R = np.array([[1.0, 0.0, 0.0], [0.0, -s, -co], [0.0, co, -s]])
        t = -R @ np.array([0.0, 0.0, height])
        return cls(K, R, t, (image_size, image_size), (depth_min, depth_max, n_bins))

    @property
    def width(self) -> int:
        return self.image_size[0]

    @property
    def height(self) -> int:
        return self.image_size[1]

    @property
    def n_bins(self) -> int:
        return self.depth_bins[2]

    @property
    def bin_width(self) -> float:
        d_min, d_max, n_bins = self.depth_bins
        return (d_max - d_min) / n_bins

    @property
    def bin_centers(self) -> FloatArray:
        d_min, _, n_bins = self.depth_bins
        return d_min + (np.arange(n_bins) + 0.5) * self.bin_width

    @property
    def center(self) -> FloatArray:
        """Camera position in world coordinates."""
        return -self.R.T @ self.t

    def bin_index(self, depth: npt.ArrayLike) -> npt.NDArray[np.int64]:
        """floor((d − d_min)/bin_width), clipped to the last bin."""
        d_min, _, n_bins = self.depth_bins
        index = np.floor((np.asarray(depth, dtype=np.float64) - d_min) / self.bin_width).astype(np.int64)
        return np.clip(index, 0, n_bins - 1)

    def ray_directions(self, u: npt.ArrayLike, v: npt.ArrayLike) -> FloatArray:
        """World-frame directions scaled so that camera depth Z equals 1.

        Args:
            u: Pixel x coordinates (pixel centers are at col + 0.5).
            v: Pixel y coordinates.

        Returns:
            N×3 directions.
        """
        u = np.asarray(u, dtype=np.float64).reshape(-1)
        v = np.asarray(v, dtype=np.float64).reshape(-1)
        pix = np.stack([u, v, np.ones_like(u)])
        return (self.R.T @ (self.K_inv @ pix)).T

    def to_entries(self) -> dict[str, npt.NDArray[Any]]:
        """Archive entries "K", "R", "t", "depth_bins"."""
        d_min, d_max, n_bins = self.depth_bins
        return {
            "K": self.K.astype(np.float32),
            "R": self.R.astype(np.float32),
            "t": self.t.astype(np.float32),
            "depth_bins": np.array([d_min, d_max, n_bins], dtype=np.float32),
        }

    @classmethod
    def from_entries(cls, entries: dict[str, npt.NDArray[Any]], image_size: tuple[int, int]) -> CameraRig:
        d_min, d_max, n_bins = (float(v) for v in entries["depth_bins"])
        return cls(entries["K"], entries["R"], entries["t"], image_size, (d_min, d_max, int(n_bins)))


@dataclass(frozen=True)
class BEVGrid:
    """Metric top-down grid holding C×H×W feature maps.

    Attributes:
        x_range: (x_min, x_max) meters, mapped to columns.
        y_range: (y_min, y_max) meters, mapped to rows.
        resolution: (H, W) cells.
        channels: Feature channels C.
    """

    x_range: tuple[float, float]
    y_range: tuple[float, float]
    resolution: tuple[int, int]
    channels: int

    def __post_init__(self) -> None:
        height, width = self.resolution
        if height < 1 or width < 1 or self.channels < 1:
            raise ConfigError(f"invalid BEV grid resolution {self.resolution} / channels {self.channels}")
        cell_x = (self.x_range[1] - self.x_range[0]) / width
        cell_y = (self.y_range[1] - self.y_range[0]) / height
        if cell_x <= 0 or cell_y <= 0:
            raise ConfigError(f"BEV grid extent must be positive, got x={self.x_range} y={self.y_range}")
        if not math.isclose(cell_x, cell_y, rel_tol=1e-9):
            raise ConfigError(f"BEV cells must be square, got {cell_x} x {cell_y}")

    @classmethod
    def centered(cls, extent: float, size: int, channels: int) -> BEVGrid:
        """Square size×size grid of side `extent` meters centered on the ego."""
        half = extent / 2.0
        return cls((-half, half), (-half, half), (size, size), channels)

    @property
    def cell_size(self) -> float:
        return (self.x_range[1] - self.x_range[0]) / self.resolution[1]

    @property
    def n_cells(self) -> int:
        return self.resolution[0] * self.resolution[1]

    def cell_index(self, x: npt.ArrayLike, y: npt.ArrayLike) -> npt.NDArray[np.int64]:
        """Flat row-major cell index per point, -1 outside the grid."""
        x = np.asarray(x, dtype=np.float64)
        y = np.asarray(y, dtype=np.float64)
        col = np.floor((x - self.x_range[0]) / self.cell_size).astype(np.int64)
        row = np.floor((y - self.y_range[0]) / self.cell_size).astype(np.int64)
        height, width = self.resolution
        inside = (row >= 0) & (row < height) & (col >= 0) & (col < width)
        return np.where(inside, row * width + col, -1)

    def cell_centers(self) -> tuple[FloatArray, FloatArray]:
        """(xs, ys) H×W arrays of cell-center coordinates."""
        height, width = self.resolution
        xs = self.x_range[0] + (np.arange(width) + 0.5) * self.cell_size
        ys = self.y_range[0] + (np.arange(height) + 0.5) * self.cell_size
        grid_x, grid_y = np.meshgrid(xs, ys)
        return grid_x, grid_y


@dataclass
class DepthDistribution:
    """Per-pixel categorical distribution over depth bins (n_bins×h×w)."""

    probs: Tensor

    def __post_init__(self) -> None:
        if self.probs.ndim != 3:
            raise ShapeError(f"depth distribution must be n_bins×h×w, got {self.probs.shape}")

    @property
    def n_bins(self) -> int:
        return self.probs.shape[0]

    @property
    def spatial(self) -> tuple[int, int]:
        return self.probs.shape[1], self.probs.shape[2]

    def is_simplex(self, tol: float = SIMPLEX_TOL) -> bool:
        data = self.probs.data
        return bool((data >= 0).all() and np.abs(data.sum(axis=0) - 1.0).max() <= tol)


def rig_from_config(config: TrainConfig) -> CameraRig:
    """The forward-looking rig described by a training config."""
    return CameraRig.from_pinhole(
        config.image_size,
        config.fov,
        config.camera_height,
        config.camera_pitch,
        config.depth_min,
        config.depth_max,
        config.depth_bins,
    )


def grid_from_config(config: TrainConfig) -> BEVGrid:
    return BEVGrid.centered(config.bev_extent, config.bev_size, config.bev_channels)
