"""Goal-directed torso trajectories over a scene's walkable grid.

Breadth-first shortest path between sampled endpoints, moving-average
smoothing, then arc-length resampling at a constant sampled walking speed.
Activities: plain walking, walking that ends seated (sit-down), or rising
from a seat before walking (stand-up); the seated frames anchor at a seat
box and lower the torso to seat height.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass
from typing import List, Optional, Tuple

import numpy as np

from ..errors import DataError
from .scene import FREE, OBSTACLE, SceneMap, main_free_region, seat_cells_with_access

ACTIVITIES = ("walk", "sit-down", "stand-up")

STAND_TORSO_Z = 1.05
SIT_TORSO_Z = 0.62
SPEED_RANGE = (0.6, 1.4)  # m/s
STRIDE_M = 1.3  # gait phase advances 2*pi per stride


@dataclass
class Trajectory:
    torso: np.ndarray  # [F, 3] world meters
    gait_phase: np.ndarray  # [F] radians; frozen while seated
    seated: np.ndarray  # [F] blend weight in [0, 1]
    activity: str
    speed: float


def grid_path(scene: SceneMap, start: Tuple[int, int],
              goal: Tuple[int, int]) -> Optional[List[Tuple[int, int]]]:
    """Shortest 4-connected path over non-obstacle cells, or None."""
    rows, cols = scene.occupancy.shape
    if scene.occupancy[start] == OBSTACLE or scene.occupancy[goal] == OBSTACLE:
        return None
    prev = {start: None}
    queue = deque([start])
    while queue:
        cell = queue.popleft()
        if cell == goal:
            path = [cell]
            while prev[path[-1]] is not None:
                path.append(prev[path[-1]])
            return path[::-1]
        r, c = cell
        for dr, dc in ((1, 0), (-1, 0), (0, 1), (0, -1)):
            nxt = (r + dr, c + dc)
            if (0 <= nxt[0] < rows and 0 <= nxt[1] < cols
                    and scene.occupancy[nxt] != OBSTACLE and nxt not in prev):
                prev[nxt] = cell
                queue.append(nxt)
    return None


def _smooth_polyline(points: np.ndarray, window: int) -> np.ndarray:
    """Moving average with endpoints pinned."""
    if window <= 1 or len(points) <= 2:
        return points
    pad = window // 2
    padded = np.concatenate([np.repeat(points[:1], pad, axis=0), points,
                             np.repeat(points[-1:], pad, axis=0)])
    kernel = np.ones(window) / window
    out = np.stack([np.convolve(padded[:, d], kernel, mode="valid")
                    for d in range(points.shape[1])], axis=1)
    out[0] = points[0]
    out[-1] = points[-1]
    return out


def _resample_arc_length(points: np.ndarray, distances: np.ndarray) -> np.ndarray:
    """Positions at the given arc-length stations along the polyline."""
    seg = np.linalg.norm(np.diff(points, axis=0), axis=1)
    cum = np.concatenate([[0.0], np.cumsum(seg)])
    stations = np.clip(distances, 0.0, cum[-1])
    out = np.empty((len(stations), points.shape[1]))
    for d in range(points.shape[1]):
        out[:, d] = np.interp(stations, cum, points[:, d])
    return out


def _collision_free(scene: SceneMap, xy: np.ndarray) -> bool:
    return all(scene.code_at(x, y) != OBSTACLE for x, y in xy)


def _pick_far_cell(rng: np.random.Generator, region_cells: np.ndarray,
                   start: Tuple[int, int], min_dist_m: float,
                   mpc: float) -> Optional[Tuple[int, int]]:
    d = np.linalg.norm((region_cells - np.array(start)) * mpc, axis=1)
    far = region_cells[d >= min_dist_m]
    if len(far) == 0:
        return None
    pick = far[rng.integers(len(far))]
    return (int(pick[0]), int(pick[1]))


def _walk_track(scene: SceneMap, rng: np.random.Generator,
                start: Tuple[int, int], goal: Tuple[int, int],
                n_frames: int, fps: float, speed: float,
                align_end: bool = False,
                ) -> Optional[Tuple[np.ndarray, np.ndarray]]:
    """(xy positions [F, 2], walked distance [F]) or None if blocked.

    align_end walks the final stretch of the route so the track ends
    exactly at the goal cell; otherwise it starts exactly at the start
    cell and ends wherever the frame budget runs out.
    """
    cells = grid_path(scene, start, goal)
    if cells is None or len(cells) < 2:
        return None
    pts = np.array([scene.cell_center(r, c) for r, c in cells])
    need = speed * (n_frames - 1) / fps
    walked = np.arange(n_frames) * speed / fps
    for window in (5, 3, 1):
        # less smoothing keeps more of the raw arc length and hugs the
        # grid path more closely, so both failure modes shrink with window
        smooth = _smooth_polyline(pts, window)
        seg = np.linalg.norm(np.diff(smooth, axis=0), axis=1)
        total = float(seg.sum())
        if total + 1e-9 < need:
            continue
        stations = walked + (total - need) if align_end else walked
        xy = _resample_arc_length(smooth, stations)
        if _collision_free(scene, xy):
            return xy, walked
    return None


def _blend(a: float, b: float, w: np.ndarray) -> np.ndarray:
    return a + (b - a) * w


def _smoothstep(n: int) -> np.ndarray:
    t = np.linspace(0.0, 1.0, n)
    return t * t * (3.0 - 2.0 * t)


def generate_trajectory(scene: SceneMap, seed: int, n_frames: int = 30,
                        fps: float = 10.0, retries: int = 40) -> Trajectory:
    """Sample one activity trajectory; deterministic per (scene, seed)."""
    if n_frames < 4:
        raise ValueError("n_frames must be >= 4")
    region = main_free_region(scene)
    free_mask = region & (scene.occupancy == FREE)
    region_cells = np.argwhere(free_mask)
    if len(region_cells) == 0:
        raise DataError("scene has no walkable region")
    seats = seat_cells_with_access(scene)
    mpc = scene.meters_per_cell

    for attempt in range(retries):
        rng = np.random.default_rng(np.random.SeedSequence(
            entropy=(seed, attempt)))
        speed = rng.uniform(*SPEED_RANGE)
        activity = ACTIVITIES[rng.integers(len(ACTIVITIES))] if seats \
            else "walk"
        # seated tail/head is a fixed short segment of the clip
        n_seat = min(8, n_frames // 3) if activity != "walk" else 0
        n_walk = n_frames - n_seat

        if activity == "sit-down":
            seat_cell, access = seats[rng.integers(len(seats))]
            start = _pick_far_cell(rng, region_cells, access, 3.0, mpc)
            if start is None:
                continue
            walk = _walk_track(scene, rng, start, access, n_walk, fps, speed,
                               align_end=True)
            if walk is None:
                continue
            xy_walk, dist = walk
            seat_xy = np.array(scene.cell_center(*seat_cell))
            w = _smoothstep(n_seat)
            xy_seat = xy_walk[-1] + (seat_xy - xy_walk[-1]) * w[:, None]
            xy = np.concatenate([xy_walk, xy_seat])
            z = np.concatenate([np.full(n_walk, STAND_TORSO_Z),
                                _blend(STAND_TORSO_Z, SIT_TORSO_Z, w)])
            seated = np.concatenate([np.zeros(n_walk), w])
            phase = np.concatenate([dist, np.full(n_seat, dist[-1])])
        elif activity == "stand-up":
            seat_cell, access = seats[rng.integers(len(seats))]
            goal = _pick_far_cell(rng, region_cells, access, 3.0, mpc)
            if goal is None:
                continue
            walk = _walk_track(scene, rng, access, goal, n_walk, fps, speed)
            if walk is None:
                continue
            xy_walk, dist = walk
            seat_xy = np.array(scene.cell_center(*seat_cell))
            w = _smoothstep(n_seat)
            xy_seat = seat_xy + (xy_walk[0] - seat_xy) * w[:, None]
            xy = np.concatenate([xy_seat, xy_walk])
            z = np.concatenate([_blend(SIT_TORSO_Z, STAND_TORSO_Z, w),
                                np.full(n_walk, STAND_TORSO_Z)])
            seated = np.concatenate([1.0 - w, np.zeros(n_walk)])
            phase = np.concatenate([np.zeros(n_seat), dist])
        else:
            start_cell = region_cells[rng.integers(len(region_cells))]
            start = (int(start_cell[0]), int(start_cell[1]))
            goal = _pick_far_cell(rng, region_cells, start, 4.0, mpc)
            if goal is None:
                continue
            walk = _walk_track(scene, rng, start, goal, n_frames, fps, speed)
            if walk is None:
                continue
            xy, dist = walk
            z = np.full(n_frames, STAND_TORSO_Z)
            seated = np.zeros(n_frames)
            phase = dist

        torso = np.concatenate([xy, z[:, None]], axis=1)
        gait = 2.0 * np.pi * phase / STRIDE_M
        return Trajectory(torso=torso, gait_phase=gait, seated=seated,
                          activity=activity, speed=float(speed))
    raise DataError(
        f"could not sample a trajectory after {retries} attempts (seed {seed})")
