"""Geometry module - Camera rigs, BEV grids, projection and the view transformer."""

from diffbev.geometry.camera import BEVGrid, CameraRig, DepthDistribution, grid_from_config, rig_from_config
from diffbev.geometry.projection import DepthTarget, ProjectedPoints, depth_ground_truth, project_points
from diffbev.geometry.view_transformer import SemanticFromDepth, SplatPlan, lift_splat, plan_splat, semantic_from_depth

__all__ = [
    "BEVGrid",
    "CameraRig",
    "DepthDistribution",
    "DepthTarget",
    "ProjectedPoints",
    "SemanticFromDepth",
    "SplatPlan",
    "depth_ground_truth",
    "grid_from_config",
    "lift_splat",
    "plan_splat",
    "project_points",
    "rig_from_config",
    "semantic_from_depth",
]
