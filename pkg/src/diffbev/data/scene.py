"""Deterministic synthetic driving scenes.

A scene is a ground plane with flat colored regions (road, crossings,
walkways) and axis-aligned boxes (vehicles and other obstacles). The
camera image is rendered by casting one ray per pixel center, the point
cloud is sampled from the same rays, and the BEV labels rasterize the
object footprints at cell centers.

This module provides:
- CLASS_KINDS: class palette, first n_classes entries active
- SceneSpec: generation parameters
- SceneObject / SceneLayout: the world description
- build_layout, cast_rays, render_image, rasterize_labels, valid_cells
- SceneSample / generate_scene
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from enum import Enum
from typing import Any

import numpy as np
import numpy.typing as npt

from diffbev.core.config import TrainConfig
from diffbev.core.errors import ConfigError
from diffbev.geometry.camera import BEVGrid, CameraRig, FloatArray, rig_from_config

logger = logging.getLogger(__name__)

MAX_RAY_DISTANCE = 60.0
HIT_EPS = 1e-9
SKY_COLOR = (0.55, 0.7, 0.9)
GROUND_COLOR = (0.42, 0.55, 0.33)
LIGHT_DIRECTION = np.array([0.4, -0.5, 0.77]) / np.linalg.norm([0.4, -0.5, 0.77])
AMBIENT = 0.35
PLACEMENT_ATTEMPTS = 20


class Placement(str, Enum):
    """Where an object kind is placed relative to the road."""

    ROAD = "road"
    ON_ROAD = "on_road"
    BESIDE_ROAD = "beside_road"
    ROADSIDE = "roadside"


@dataclass(frozen=True)
class ClassKind:
    """One semantic class and how its instances are generated.

    Attributes:
        name: Class name used in reports.
        flat: Ground region (True) or box obstacle (False).
        placement: Placement rule.
        size: (width x, length y, height z) in meters; 0 means "from the road".
        count: (min, max) instances per scene.
        color: RGB base color.
    """

    name: str
    flat: bool
    placement: Placement
    size: tuple[float, float, float]
    count: tuple[int, int]
    color: tuple[float, float, float]


CLASS_KINDS: tuple[ClassKind, ...] = (
    ClassKind("drivable", True, Placement.ROAD, (0.0, 0.0, 0.0), (1, 1), (0.33, 0.33, 0.36)),
    ClassKind("vehicle", False, Placement.ON_ROAD, (1.8, 4.0, 1.5), (1, 3), (0.75, 0.12, 0.12)),
    ClassKind("crossing", True, Placement.ON_ROAD, (0.0, 2.0, 0.0), (0, 1), (0.92, 0.92, 0.9)),
    ClassKind("walkway", True, Placement.BESIDE_ROAD, (1.5, 0.0, 0.0), (1, 1), (0.7, 0.62, 0.52)),
    ClassKind("pedestrian", False, Placement.ROADSIDE, (0.6, 0.6, 1.7), (0, 2), (0.8, 0.3, 0.6)),
    ClassKind("barrier", False, Placement.ROADSIDE, (0.4, 2.0, 1.0), (0, 1), (0.95, 0.55, 0.1)),
    ClassKind("cone", False, Placement.ON_ROAD, (0.4, 0.4, 0.7), (0, 2), (1.0, 0.45, 0.0)),
    ClassKind("bicycle", False, Placement.ROADSIDE, (0.6, 1.8, 1.2), (0, 1), (0.2, 0.5, 0.85)),
)

VEHICLE_COLORS = ((0.75, 0.12, 0.12), (0.15, 0.25, 0.7), (0.85, 0.85, 0.2), (0.1, 0.1, 0.1), (0.9, 0.9, 0.92))


@dataclass(frozen=True)
class SceneSpec:
    """Parameters of the scene generator.

    Attributes:
        extent: Side of the square BEV area in meters (ego at the center).
        bev_size: Label grid side in cells.
        n_classes: Active prefix of CLASS_KINDS.
        min_vehicles: Lower bound on vehicle count.
        max_vehicles: Upper bound on vehicle count.
        point_fraction: Share of pixels whose ray yields a point.
        ground: Whether the ground plane exists.
        roads: Whether road-relative regions are placed.
    """

    rig: CameraRig
    extent: float = 20.0
    bev_size: int = 32
    n_classes: int = 2
    min_vehicles: int = 1
    max_vehicles: int = 3
    point_fraction: float = 0.5
    ground: bool = True
    roads: bool = True

    def __post_init__(self) -> None:
        if self.extent <= 0:
            raise ConfigError(f"scene extent must be positive, got {self.extent}")
        if not 1 <= self.n_classes <= len(CLASS_KINDS):
            raise ConfigError(f"n_classes must be in [1, {len(CLASS_KINDS)}], got {self.n_classes}")

    @classmethod
    def from_config(cls, config: TrainConfig) -> SceneSpec:
        return cls(
            rig=rig_from_config(config),
            extent=config.bev_extent,
            bev_size=config.bev_size,
            n_classes=config.n_classes,
            min_vehicles=config.min_vehicles,
            max_vehicles=config.max_vehicles,
            point_fraction=config.point_fraction,
        )

    @property
    def grid(self) -> BEVGrid:
        return BEVGrid.centered(self.extent, self.bev_size, 1)


@dataclass(frozen=True)
class SceneObject:
    """Axis-aligned object; flat objects have lo[2] == hi[2] == 0."""

    class_id: int
    lo: tuple[float, float, float]
    hi: tuple[float, float, float]
    color: tuple[float, float, float]

    def contains_xy(self, x: npt.ArrayLike, y: npt.ArrayLike) -> npt.NDArray[np.bool_]:
        x = np.asarray(x)
        y = np.asarray(y)
        return (x >= self.lo[0]) & (x <= self.hi[0]) & (y >= self.lo[1]) & (y <= self.hi[1])

    def overlaps(self, other: SceneObject, margin: float = 0.3) -> bool:
        return not (
            self.hi[0] + margin <= other.lo[0]
            or other.hi[0] + margin <= self.lo[0]
            or self.hi[1] + margin <= other.lo[1]
            or other.hi[1] + margin <= self.lo[1]
        )


@dataclass
class SceneLayout:
    """World description; flats are ordered bottom to top."""

    flats: list[SceneObject] = field(default_factory=list)
    boxes: list[SceneObject] = field(default_factory=list)
    ground: bool = True

    @property
    def objects(self) -> list[SceneObject]:
        """Flats then boxes; cast_rays ids index this list."""
        return [*self.flats, *self.boxes]


def _box(class_id: int, cx: float, cy: float, size: tuple[float, float, float], color: tuple[float, float, float]) -> SceneObject:
    w, length, h = size
    return SceneObject(class_id, (cx - w / 2, cy - length / 2, 0.0), (cx + w / 2, cy + length / 2, h), color)


def build_layout(rng: np.random.Generator, spec: SceneSpec) -> SceneLayout:
    """Place flats and boxes for the active classes.

    Boxes are rejected when their footprints overlap (up to a fixed
    number of attempts each). Boxes sit in front of the camera so most of
    them are visible.
    """
    half = spec.extent / 2.0
    layout = SceneLayout(ground=spec.ground)
    road_lo, road_hi = -half, half
    if spec.roads:
        center = float(rng.uniform(-2.5, 2.5))
        width = float(rng.uniform(4.0, 7.0))
        road_lo, road_hi = center - width / 2, center + width / 2
        layout.flats.append(SceneObject(0, (road_lo, -half, 0.0), (road_hi, half, 0.0), CLASS_KINDS[0].color))

    ahead_lo = 2.5
    ahead_hi = max(half - 1.0, ahead_lo)
    for class_id, kind in enumerate(CLASS_KINDS[: spec.n_classes]):
        if class_id == 0:
            continue
        if kind.flat:
            if not spec.roads:
                continue
            n = int(rng.integers(kind.count[0], kind.count[1] + 1))
            for _ in range(n):
                if kind.placement is Placement.ON_ROAD:
                    cy = float(rng.uniform(ahead_lo, ahead_hi))
                    lo, hi = (road_lo, cy - kind.size[1] / 2, 0.0), (road_hi, cy + kind.size[1] / 2, 0.0)
                else:
                    side = 1.0 if rng.uniform() < 0.5 else -1.0
                    edge = road_hi if side > 0 else road_lo
                    x0, x1 = sorted((edge, edge + side * kind.size[0]))
                    lo, hi = (x0, -half, 0.0), (x1, half, 0.0)
                layout.flats.append(SceneObject(class_id, lo, hi, kind.color))
            continue

        if class_id == 1:
            n = int(rng.integers(spec.min_vehicles, spec.max_vehicles + 1))
        else:
            n = int(rng.integers(kind.count[0], kind.count[1] + 1))
        for _ in range(n):
            for _attempt in range(PLACEMENT_ATTEMPTS):
                w = kind.size[0]
                if kind.placement is Placement.ON_ROAD:
                    cx = float(rng.uniform(road_lo + w / 2, max(road_lo + w / 2, road_hi - w / 2)))
                else:
                    side = 1.0 if rng.uniform() < 0.5 else -1.0
                    edge = road_hi if side > 0 else road_lo
                    cx = edge + side * float(rng.uniform(0.8, 2.0))
                cy = float(rng.uniform(min(ahead_lo + kind.size[1] / 2, ahead_hi), ahead_hi))
                color = VEHICLE_COLORS[int(rng.integers(len(VEHICLE_COLORS)))] if class_id == 1 else kind.color
                candidate = _box(class_id, cx, cy, kind.size, color)
                if not any(candidate.overlaps(b) for b in layout.boxes):
                    layout.boxes.append(candidate)
                    break
    return layout


def cast_rays(layout: SceneLayout, origin: FloatArray, directions: FloatArray) -> tuple[FloatArray, npt.NDArray[np.int64], FloatArray]:
    """Intersect rays with the scene.

    Args:
        layout: Scene to intersect.
        origin: Ray origin (3,).
        directions: N×3 ray directions.

    Returns:
        (distance, object id, normal): distance along each direction
        (inf on miss), index into layout.objects (-1 for bare ground, -2
        for a miss) and the N×3 surface normal.
    """
    n = directions.shape[0]
    distance = np.full(n, np.inf)
    ids = np.full(n, -2, dtype=np.int64)
    normals = np.zeros((n, 3))
    dz = directions[:, 2]

    # Ground plane z = 0.
    with np.errstate(divide="ignore", invalid="ignore"):
        t_ground = np.where(dz < 0, -origin[2] / dz, np.inf)
    hit_x = origin[0] + t_ground * directions[:, 0]
    hit_y = origin[1] + t_ground * directions[:, 1]
    ground_ids = np.full(n, -1 if layout.ground else -2, dtype=np.int64)
    for index, flat in enumerate(layout.flats):
        ground_ids = np.where(flat.contains_xy(hit_x, hit_y), index, ground_ids)
    ground_hit = np.isfinite(t_ground) & (t_ground <= MAX_RAY_DISTANCE) & (ground_ids != -2)
    distance = np.where(ground_hit, t_ground, distance)
    ids = np.where(ground_hit, ground_ids, ids)
    normals[ground_hit] = (0.0, 0.0, 1.0)

    # Boxes, slab method.
    offset = len(layout.flats)
    safe = np.where(np.abs(directions) < HIT_EPS, HIT_EPS, directions)
    for index, box in enumerate(layout.boxes):
        lo = np.asarray(box.lo, dtype=np.float64)
        hi = np.asarray(box.hi, dtype=np.float64)
        t0 = (lo - origin) / safe
        t1 = (hi - origin) / safe
        near = np.minimum(t0, t1)
        far = np.maximum(t0, t1)
        t_near = near.max(axis=1)
        t_far = far.min(axis=1)
        hit = (t_far >= t_near) & (t_near > HIT_EPS) & (t_near < distance) & (t_near <= MAX_RAY_DISTANCE)
        if not hit.any():
            continue
        distance = np.where(hit, t_near, distance)
        ids = np.where(hit, offset + index, ids)
        axis = near.argmax(axis=1)
        face = np.zeros((n, 3))
        face[np.arange(n), axis] = -np.sign(safe[np.arange(n), axis])
        normals[hit] = face[hit]
    return distance, ids, normals


def _shade(layout: SceneLayout, ids: npt.NDArray[np.int64], normals: FloatArray) -> FloatArray:
    objects = layout.objects
    colors = np.tile(np.asarray(SKY_COLOR), (ids.shape[0], 1))
    colors[ids == -1] = GROUND_COLOR
    for index, obj in enumerate(objects):
        colors[ids == index] = obj.color
    lambert = np.clip(normals @ LIGHT_DIRECTION, 0.0, 1.0)
    light = np.where(ids == -2, 1.0, AMBIENT + (1.0 - AMBIENT) * lambert)
    return np.clip(colors * light[:, None], 0.0, 1.0)


def pixel_centers(rig: CameraRig) -> tuple[FloatArray, FloatArray]:
    """Row-major u, v coordinates of every pixel center."""
    cols, rows = np.meshgrid(np.arange(rig.width), np.arange(rig.height))
    return cols.reshape(-1) + 0.5, rows.reshape(-1) + 0.5


def render_image(layout: SceneLayout, rig: CameraRig) -> tuple[npt.NDArray[np.float32], FloatArray, npt.NDArray[np.int64]]:
    """Ray-cast every pixel center.

    Returns:
        (3×H×W image in [0, 1], per-pixel hit distance, per-pixel object id).
    """
    u, v = pixel_centers(rig)
    directions = rig.ray_directions(u, v)
    distance, ids, normals = cast_rays(layout, rig.center, directions)
    rgb = _shade(layout, ids, normals)
    image = rgb.T.reshape(3, rig.height, rig.width).astype(np.float32)
    return image, distance, ids


def rasterize_labels(layout: SceneLayout, grid: BEVGrid, n_classes: int) -> npt.NDArray[np.uint8]:
    """M×H×W footprint masks: a cell is positive when its center lies in an object."""
    xs, ys = grid.cell_centers()
    labels = np.zeros((n_classes, *grid.resolution), dtype=np.uint8)
    for obj in layout.objects:
        if 0 <= obj.class_id < n_classes:
            labels[obj.class_id] |= obj.contains_xy(xs, ys).astype(np.uint8)
    return labels


def valid_cells(rig: CameraRig, grid: BEVGrid) -> npt.NDArray[np.uint8]:
    """Cells whose ground-level center falls inside the camera frustum."""
    xs, ys = grid.cell_centers()
    points = np.stack([xs.reshape(-1), ys.reshape(-1), np.zeros(xs.size)], axis=1)
    cam = points @ rig.R.T + rig.t
    depth = cam[:, 2]
    d_min, d_max, _ = rig.depth_bins
    in_depth = (depth >= d_min) & (depth <= d_max)
    pix = cam @ rig.K.T
    safe = np.where(in_depth, depth, 1.0)
    u, v = pix[:, 0] / safe, pix[:, 1] / safe
    inside = in_depth & (u >= 0) & (u < rig.width) & (v >= 0) & (v < rig.height)
    return inside.astype(np.uint8).reshape(grid.resolution)


@dataclass
class SceneSample:
    """One training example.

    Attributes:
        image: 3×H_img×W_img float32 in [0, 1].
        points: N×3 float32 world points.
        bev_labels: M×H×W uint8 {0, 1}.
        valid_mask: H×W uint8 {0, 1}.
        rig: Camera rig.
        seed: Generator seed, -1 when unknown.
    """

    image: npt.NDArray[np.float32]
    points: npt.NDArray[np.float32]
    bev_labels: npt.NDArray[np.uint8]
    valid_mask: npt.NDArray[np.uint8]
    rig: CameraRig
    seed: int = -1

    def to_entries(self) -> dict[str, npt.NDArray[Any]]:
        """Archive entries in the dataset file order."""
        return {
            "image": self.image,
            "points": self.points,
            "bev_labels": self.bev_labels,
            "valid_mask": self.valid_mask,
            **self.rig.to_entries(),
        }

    @classmethod
    def from_entries(cls, entries: dict[str, npt.NDArray[Any]], seed: int = -1) -> SceneSample:
        image = entries["image"].astype(np.float32)
        rig = CameraRig.from_entries(entries, (image.shape[2], image.shape[1]))
        return cls(
            image=image,
            points=entries["points"].astype(np.float32).reshape(-1, 3),
            bev_labels=entries["bev_labels"].astype(np.uint8),
            valid_mask=entries["valid_mask"].astype(np.uint8),
            rig=rig,
            seed=seed,
        )


def generate_scene(seed: int, spec: SceneSpec) -> SceneSample:
    """Generate one scene; fully determined by seed and spec.

    Raises:
        ConfigError: If the scene extent is zero.
    """
    rng = np.random.default_rng(seed)
    rig = spec.rig
    layout = build_layout(rng, spec)
    image, distance, _ = render_image(layout, rig)

    u, v = pixel_centers(rig)
    hit = np.flatnonzero(np.isfinite(distance))
    n_pick = int(round(hit.size * spec.point_fraction))
    picked = np.sort(rng.choice(hit, size=n_pick, replace=False)) if n_pick else np.zeros(0, dtype=np.int64)
    directions = rig.ray_directions(u[picked], v[picked])
    points = (rig.center[None, :] + distance[picked, None] * directions).astype(np.float32)

    labels = rasterize_labels(layout, spec.grid, spec.n_classes)
    mask = valid_cells(rig, spec.grid)
    logger.debug(f"Scene {seed}: {len(layout.boxes)} boxes, {len(layout.flats)} flats, {points.shape[0]} points")
    return SceneSample(image=image, points=points.reshape(-1, 3), bev_labels=labels, valid_mask=mask, rig=rig, seed=seed)
