"""Flat-shaded raycast rendering of a scene's boxes and floor.

One ray per pixel, slab intersection against every box (walls, divider,
furniture, seats) plus the floor plane. Brightness encodes the hit face's
axis, colors come from a palette seeded by the scene, so the image is a
deterministic function of (scene, camera) and carries the occupancy layout
the networks are meant to read.
"""

from __future__ import annotations

import numpy as np

from ..geometry import CameraModel
from .camera import CameraPose
from .scene import SceneMap

BACKGROUND = np.array([16.0, 16.0, 20.0])
FLOOR_COLOR = np.array([122.0, 117.0, 108.0])
_KIND_BASE = {
    "wall": np.array([201.0, 196.0, 187.0]),
    "divider": np.array([186.0, 179.0, 168.0]),
    "seat": np.array([173.0, 111.0, 62.0]),
}
_AXIS_SHADE = np.array([0.62, 0.78, 1.0])  # x, y, top faces
_FLOOR_SHADE = 0.9


def _palette(scene: SceneMap) -> np.ndarray:
    """Per-box base colors, [n_boxes, 3] float; furniture gets random hues."""
    rng = np.random.default_rng(
        np.random.SeedSequence(entropy=(scene.palette_seed, 97)))
    colors = np.empty((len(scene.furniture), 3))
    for i, box in enumerate(scene.furniture):
        if box.kind == "furniture":
            colors[i] = rng.uniform(60.0, 210.0, size=3)
        else:
            colors[i] = _KIND_BASE[box.kind]
            rng.uniform(size=3)  # keep the stream aligned per box index
    return colors


def _scene_jitter(scene: SceneMap) -> np.ndarray:
    rng = np.random.default_rng(
        np.random.SeedSequence(entropy=(scene.palette_seed, 131)))
    return rng.uniform(0.9, 1.1, size=3)


def render_scene(scene: SceneMap, camera: CameraModel,
                 pose: CameraPose) -> np.ndarray:
    """[H, W, 3] uint8. Ray through pixel (u, v) = (col, row)."""
    h, w = camera.height, camera.width
    uu, vv = np.meshgrid(np.arange(w, dtype=np.float64),
                         np.arange(h, dtype=np.float64))
    d_cam = np.stack([(uu - camera.cx) / camera.fx,
                      (vv - camera.cy) / camera.fy,
                      np.ones_like(uu)], axis=-1).reshape(-1, 3)
    d = pose.camera_to_world_dir(d_cam)
    o = pose.position
    p = d.shape[0]

    best_t = np.full(p, np.inf)
    color = np.tile(BACKGROUND, (p, 1))

    width_m, depth_m = scene.extent_m
    with np.errstate(divide="ignore", invalid="ignore"):
        t_floor = -o[2] / d[:, 2]
        fx = o[0] + t_floor * d[:, 0]
        fy = o[1] + t_floor * d[:, 1]
        hit = ((t_floor > 1e-6) & (fx >= 0) & (fx <= width_m)
               & (fy >= 0) & (fy <= depth_m))
        best_t[hit] = t_floor[hit]
        color[hit] = FLOOR_COLOR * _FLOOR_SHADE

        palette = _palette(scene)
        for i, box in enumerate(scene.furniture):
            lo = np.array([box.x0, box.y0, 0.0])
            hi = np.array([box.x1, box.y1, box.height])
            t1 = (lo - o) / d
            t2 = (hi - o) / d
            tmin = np.minimum(t1, t2)
            tmax = np.maximum(t1, t2)
            t_enter = tmin.max(axis=1)
            t_exit = tmax.min(axis=1)
            hit = (t_enter > 1e-6) & (t_exit > t_enter) & (t_enter < best_t)
            if not hit.any():
                continue
            axis = tmin[hit].argmax(axis=1)
            color[hit] = palette[i] * _AXIS_SHADE[axis][:, None]
            best_t[hit] = t_enter[hit]

    color *= _scene_jitter(scene)
    return np.clip(color, 0.0, 255.0).reshape(h, w, 3).astype(np.uint8)
