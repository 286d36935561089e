"""Synthetic optical-flow triplets from single frames and depth maps."""

from .camera import Intrinsics, SE3Pose, back_project, intrinsics_from_fovy, project, relative_transform, transform_point
from .grid import DepthMap, FlowField, Indexing, bilinear_sample, center_crop_resize
from .synthesis import (
    CorrespondenceGrid,
    MotionConfig,
    drop_flow_points,
    normalize_correspondence,
    reindex_flow,
    sample_camera_motion,
    synthesize_flow,
)

__version__ = "0.1.0"

__all__ = [
    "CorrespondenceGrid",
    "DepthMap",
    "FlowField",
    "Indexing",
    "Intrinsics",
    "MotionConfig",
    "SE3Pose",
    "back_project",
    "bilinear_sample",
    "center_crop_resize",
    "drop_flow_points",
    "intrinsics_from_fovy",
    "normalize_correspondence",
    "project",
    "reindex_flow",
    "relative_transform",
    "sample_camera_motion",
    "synthesize_flow",
    "transform_point",
]
