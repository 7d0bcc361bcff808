"""Procedural indoor scenes, actor motion, cameras, and dataset IO."""

from .camera import CameraPose, intrinsics_for, sample_camera
from .dataset import (SceneSample, read_dataset, read_joint_table,
                      read_manifest, read_sample, validate_dataset,
                      validate_sample, write_dataset, write_joint_table)
from .generate import (GenerateConfig, build_manifest, generate_dataset,
                       generate_sample, scene_splits)
from .posesynth import (JOINT_NAMES, JOINT_PARENTS, TORSO_INDEX,
                        default_skeleton, synthesize_pose)
from .render import render_scene
from .scene import (FREE, OBSTACLE, SEAT, Box, SceneMap, free_components,
                    generate_scene, main_free_region, seat_cells_with_access)
from .trajectory import (ACTIVITIES, Trajectory, generate_trajectory,
                         grid_path)

__all__ = [
    "ACTIVITIES", "Box", "CameraPose", "FREE", "GenerateConfig",
    "JOINT_NAMES", "JOINT_PARENTS", "OBSTACLE", "SEAT", "SceneMap",
    "SceneSample", "TORSO_INDEX", "Trajectory", "build_manifest",
    "default_skeleton", "free_components", "generate_dataset",
    "generate_sample", "generate_scene", "generate_trajectory", "grid_path",
    "intrinsics_for", "main_free_region", "read_dataset", "read_joint_table",
    "read_manifest", "read_sample", "render_scene", "sample_camera",
    "scene_splits", "seat_cells_with_access", "synthesize_pose",
    "validate_dataset", "validate_sample", "write_dataset",
    "write_joint_table",
]
