"""Perspective cameras sampled on a sphere around the actor.

The camera sits on a sphere around the track midpoint (radius 2.5-6 m, at
least 1 m above the floor, inside the room) and looks straight at the
midpoint, so the look-at target projects exactly onto the principal point.
A candidate is rejected unless every frame's torso projects inside the
image with a small margin and its depth stays within (0.5, 10) m; sampling
repeats until a candidate passes or the attempt budget runs out.

Camera frame: x right, y down, z forward (the projection convention of the
geometry module). World frame: z up.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

from ..errors import DataError
from ..geometry import DEPTH_CAP_M, CameraModel
from .scene import SceneMap

RADIUS_RANGE = (2.5, 6.0)
MIN_CAMERA_Z = 1.0
MAX_CAMERA_Z = 2.6  # below the wall tops
EDGE_MARGIN_PX = 2.0
DEPTH_MARGIN_M = 0.1  # keep clear of the (0.5, 10) bounds after float32 IO
HORIZONTAL_FOV_DEG = 65.0


@dataclass
class CameraPose:
    """World-to-camera rigid transform."""

    rotation: np.ndarray  # [3, 3], rows are the camera axes in world coords
    position: np.ndarray  # [3] camera center, world frame

    def world_to_camera(self, points: np.ndarray) -> np.ndarray:
        pts = np.asarray(points, dtype=np.float64)
        return (pts - self.position) @ self.rotation.T

    def camera_to_world_dir(self, dirs: np.ndarray) -> np.ndarray:
        return np.asarray(dirs, dtype=np.float64) @ self.rotation


def _look_at(position: np.ndarray, target: np.ndarray) -> np.ndarray:
    forward = target - position
    norm = np.linalg.norm(forward)
    if norm < 1e-9:
        raise ValueError("camera position coincides with its target")
    forward = forward / norm
    world_up = np.array([0.0, 0.0, 1.0])
    right = np.cross(forward, world_up)
    rn = np.linalg.norm(right)
    if rn < 1e-9:  # looking straight up/down; nudge
        right = np.array([1.0, 0.0, 0.0])
    else:
        right = right / rn
    down = np.cross(forward, right)
    return np.stack([right, down, forward])


def intrinsics_for(image_size: Tuple[int, int]) -> CameraModel:
    h, w = image_size
    f = float(w / (2.0 * np.tan(np.radians(HORIZONTAL_FOV_DEG) / 2.0)))
    return CameraModel(fx=f, fy=f, cx=w / 2.0, cy=h / 2.0, width=w, height=h)


def sample_camera(scene: SceneMap, actor_track: np.ndarray, seed: int,
                  image_size: Tuple[int, int] = (256, 448),
                  retries: int = 200,
                  target: Optional[np.ndarray] = None,
                  ) -> Tuple[CameraModel, CameraPose]:
    """Deterministic per (track, seed); raises DataError when no placement
    keeps the whole track visible. The camera looks at the track midpoint
    unless an explicit look-at target is given. Elevation stays shallow so
    apparent body height remains a usable depth cue."""
    track = np.asarray(actor_track, dtype=np.float64)
    if track.ndim != 2 or track.shape[1] != 3:
        raise ValueError("actor_track must be [F, 3]")
    camera = intrinsics_for(image_size)
    if target is None:
        target = track[len(track) // 2]
    target = np.asarray(target, dtype=np.float64)
    width_m, depth_m = scene.extent_m
    rng = np.random.default_rng(np.random.SeedSequence(entropy=(seed,)))

    for _ in range(retries):
        radius = rng.uniform(*RADIUS_RANGE)
        azimuth = rng.uniform(0.0, 2.0 * np.pi)
        elevation = rng.uniform(np.radians(8.0), np.radians(30.0))
        offset = radius * np.array([
            np.cos(elevation) * np.cos(azimuth),
            np.cos(elevation) * np.sin(azimuth),
            np.sin(elevation),
        ])
        position = target + offset
        if not (MIN_CAMERA_Z <= position[2] <= MAX_CAMERA_Z):
            continue
        m = scene.meters_per_cell
        if not (m < position[0] < width_m - m and m < position[1] < depth_m - m):
            continue
        pose = CameraPose(rotation=_look_at(position, target),
                          position=position)
        cam_pts = pose.world_to_camera(track)
        depths = cam_pts[:, 2]
        if depths.min() <= 0.5 + DEPTH_MARGIN_M:
            continue
        if depths.max() >= DEPTH_CAP_M - DEPTH_MARGIN_M:
            continue
        pixels = camera.project(cam_pts)
        h, w = image_size
        if (pixels[:, 0].min() < EDGE_MARGIN_PX
                or pixels[:, 0].max() > w - EDGE_MARGIN_PX
                or pixels[:, 1].min() < EDGE_MARGIN_PX
                or pixels[:, 1].max() > h - EDGE_MARGIN_PX):
            continue
        return camera, pose
    raise DataError(
        f"no camera placement kept the actor in view after {retries} tries")
