"""Procedural renderer for aligned (original, edited, mask) video triplets."""

from .camera import PRESETS, CameraPath, sample_camera_path
from .dataset import (
    DatasetError,
    RenderConfig,
    generate_dataset,
    load_dataset,
    load_manifest,
    load_triplet,
)
from .geometry import project_shadow, reflect_point
from .render import Triplet, render_frame, render_triplet, valid_view_filter
from .scene import SceneError, SceneSpec, sample_scene

__all__ = [
    "PRESETS",
    "CameraPath",
    "DatasetError",
    "RenderConfig",
    "SceneError",
    "SceneSpec",
    "Triplet",
    "generate_dataset",
    "load_dataset",
    "load_manifest",
    "load_triplet",
    "project_shadow",
    "reflect_point",
    "render_frame",
    "render_triplet",
    "sample_camera_path",
    "sample_scene",
    "valid_view_filter",
]
