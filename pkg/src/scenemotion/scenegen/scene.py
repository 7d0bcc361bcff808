"""Procedural indoor scenes: an occupancy grid plus 3D boxes to render.

World frame: x east, y north (floor plane), z up, meters. Grid cell (row,
col) covers the square [col*mpc, (col+1)*mpc) x [row*mpc, (row+1)*mpc);
occupancy holds FREE / OBSTACLE / SEAT codes. Every box (walls, an optional
divider wall with a doorway, furniture, seats) exists both as occupancy
cells and as a world-space axis-aligned box for the renderer.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import numpy as np

FREE, OBSTACLE, SEAT = 0, 1, 2

WALL_HEIGHT_M = 3.0
SEAT_HEIGHT_M = 0.45


@dataclass
class Box:
    """Axis-aligned world-space box from the floor up."""

    x0: float
    y0: float
    x1: float
    y1: float
    height: float
    kind: str  # wall / divider / furniture / seat

    def __post_init__(self):
        if self.x1 <= self.x0 or self.y1 <= self.y0 or self.height <= 0:
            raise ValueError("box must have positive extent")


@dataclass
class SceneMap:
    occupancy: np.ndarray  # [rows, cols] uint8 of FREE/OBSTACLE/SEAT
    meters_per_cell: float
    furniture: List[Box]  # includes walls; render order = list order
    palette_seed: int  # renderer colors derive from this, not from a global RNG

    def __post_init__(self):
        self.occupancy = np.asarray(self.occupancy, dtype=np.uint8)
        if self.occupancy.ndim != 2:
            raise ValueError("occupancy must be 2-D")
        if self.meters_per_cell <= 0:
            raise ValueError("meters_per_cell must be positive")
        border = np.concatenate([
            self.occupancy[0], self.occupancy[-1],
            self.occupancy[:, 0], self.occupancy[:, -1],
        ])
        if not np.all(border == OBSTACLE):
            raise ValueError("border cells must be obstacles")

    @property
    def extent_m(self) -> Tuple[float, float]:
        """(width, depth) of the room in meters (x, y)."""
        rows, cols = self.occupancy.shape
        return (cols * self.meters_per_cell, rows * self.meters_per_cell)

    def cell_of(self, x: float, y: float) -> Tuple[int, int]:
        col = int(np.floor(x / self.meters_per_cell))
        row = int(np.floor(y / self.meters_per_cell))
        return (row, col)

    def cell_center(self, row: int, col: int) -> Tuple[float, float]:
        m = self.meters_per_cell
        return ((col + 0.5) * m, (row + 0.5) * m)

    def code_at(self, x: float, y: float) -> int:
        row, col = self.cell_of(x, y)
        rows, cols = self.occupancy.shape
        if not (0 <= row < rows and 0 <= col < cols):
            return OBSTACLE
        return int(self.occupancy[row, col])


def _mark_box(grid: np.ndarray, mpc: float, box: Box, code: int) -> None:
    rows, cols = grid.shape
    c0 = max(0, int(np.floor(box.x0 / mpc)))
    c1 = min(cols, int(np.ceil(box.x1 / mpc)))
    r0 = max(0, int(np.floor(box.y0 / mpc)))
    r1 = min(rows, int(np.ceil(box.y1 / mpc)))
    grid[r0:r1, c0:c1] = code


def free_components(grid: np.ndarray) -> np.ndarray:
    """4-connected component labels over non-obstacle cells; 0 = obstacle."""
    rows, cols = grid.shape
    labels = np.zeros((rows, cols), dtype=np.int32)
    nxt = 0
    for r in range(rows):
        for c in range(cols):
            if grid[r, c] == OBSTACLE or labels[r, c]:
                continue
            nxt += 1
            stack = [(r, c)]
            labels[r, c] = nxt
            while stack:
                cr, cc = stack.pop()
                for dr, dc in ((1, 0), (-1, 0), (0, 1), (0, -1)):
                    nr, nc = cr + dr, cc + dc
                    if (0 <= nr < rows and 0 <= nc < cols
                            and grid[nr, nc] != OBSTACLE
                            and not labels[nr, nc]):
                        labels[nr, nc] = nxt
                        stack.append((nr, nc))
    return labels


def main_free_region(scene: SceneMap) -> np.ndarray:
    """Boolean mask of the largest connected walkable region."""
    labels = free_components(scene.occupancy)
    if labels.max() == 0:
        return np.zeros_like(labels, dtype=bool)
    counts = np.bincount(labels.ravel())
    counts[0] = 0
    return labels == counts.argmax()


def _region_span_m(mask: np.ndarray, mpc: float) -> float:
    """Lower bound on the largest pairwise distance within the region."""
    rows, cols = np.nonzero(mask)
    if rows.size == 0:
        return 0.0
    return max(np.ptp(rows), np.ptp(cols)) * mpc


def _attempt_scene(rng: np.random.Generator, room_size_m: Tuple[float, float],
                   mpc: float, empty: bool, palette_seed: int) -> SceneMap:
    width_m, depth_m = room_size_m
    cols = int(round(width_m / mpc))
    rows = int(round(depth_m / mpc))
    grid = np.full((rows, cols), FREE, dtype=np.uint8)
    boxes: List[Box] = []

    w = mpc  # wall thickness = one cell
    walls = [
        Box(0.0, 0.0, width_m, w, WALL_HEIGHT_M, "wall"),
        Box(0.0, depth_m - w, width_m, depth_m, WALL_HEIGHT_M, "wall"),
        Box(0.0, 0.0, w, depth_m, WALL_HEIGHT_M, "wall"),
        Box(width_m - w, 0.0, width_m, depth_m, WALL_HEIGHT_M, "wall"),
    ]
    for box in walls:
        _mark_box(grid, mpc, box, OBSTACLE)
        boxes.append(box)

    if not empty:
        if rng.random() < 0.7:
            # one straight divider wall with a doorway gap
            vertical = rng.random() < 0.5
            if vertical:
                cw = int(rng.integers(cols // 3, 2 * cols // 3))
                gap0 = int(rng.integers(1, rows - 4))
                gap1 = gap0 + int(rng.integers(3, 5))
                for r0, r1 in ((1, gap0), (gap1, rows - 1)):
                    if r1 > r0:
                        box = Box(cw * mpc, r0 * mpc, (cw + 1) * mpc,
                                  r1 * mpc, WALL_HEIGHT_M, "divider")
                        _mark_box(grid, mpc, box, OBSTACLE)
                        boxes.append(box)
            else:
                rw = int(rng.integers(rows // 3, 2 * rows // 3))
                gap0 = int(rng.integers(1, cols - 4))
                gap1 = gap0 + int(rng.integers(3, 5))
                for c0, c1 in ((1, gap0), (gap1, cols - 1)):
                    if c1 > c0:
                        box = Box(c0 * mpc, rw * mpc, c1 * mpc,
                                  (rw + 1) * mpc, WALL_HEIGHT_M, "divider")
                        _mark_box(grid, mpc, box, OBSTACLE)
                        boxes.append(box)

        count = int(rng.integers(2, 7))  # 2..6 furniture pieces
        for _ in range(count):
            fw = rng.uniform(0.5, 2.0)
            fd = rng.uniform(0.5, 2.0)
            fx = rng.uniform(w + mpc, width_m - w - mpc - fw)
            fy = rng.uniform(w + mpc, depth_m - w - mpc - fd)
            fh = rng.uniform(0.4, 2.0)
            box = Box(fx, fy, fx + fw, fy + fd, fh, "furniture")
            _mark_box(grid, mpc, box, OBSTACLE)
            boxes.append(box)

        seats = int(rng.integers(1, 3))
        for _ in range(seats):
            sx = rng.uniform(w + mpc, width_m - w - mpc - 2 * mpc)
            sy = rng.uniform(w + mpc, depth_m - w - mpc - 2 * mpc)
            box = Box(sx, sy, sx + 2 * mpc, sy + 2 * mpc, SEAT_HEIGHT_M, "seat")
            _mark_box(grid, mpc, box, SEAT)
            boxes.append(box)

    return SceneMap(occupancy=grid, meters_per_cell=mpc, furniture=boxes,
                    palette_seed=palette_seed)


def generate_scene(seed: int, room_size_m: Tuple[float, float] = (10.0, 14.0),
                   meters_per_cell: float = 0.25,
                   empty: bool = False) -> SceneMap:
    """Deterministic per seed; regenerates internally until the walkable
    region spans at least 4 m and (unless empty) a seat touches it."""
    for attempt in range(64):
        rng = np.random.default_rng(
            np.random.SeedSequence(entropy=(seed, attempt)))
        scene = _attempt_scene(rng, room_size_m, meters_per_cell, empty,
                               palette_seed=seed)
        region = main_free_region(scene)
        if _region_span_m(region, meters_per_cell) < 4.0:
            continue
        if not empty and not _seat_reaches_region(scene, region):
            continue
        return scene
    raise RuntimeError(f"no valid scene layout for seed {seed}")


def _seat_reaches_region(scene: SceneMap, region: np.ndarray) -> bool:
    seat_cells = np.argwhere(scene.occupancy == SEAT)
    rows, cols = scene.occupancy.shape
    for r, c in seat_cells:
        for dr, dc in ((1, 0), (-1, 0), (0, 1), (0, -1)):
            nr, nc = r + dr, c + dc
            if 0 <= nr < rows and 0 <= nc < cols and region[nr, nc]:
                return True
    return False


def seat_cells_with_access(scene: SceneMap) -> List[Tuple[Tuple[int, int], Tuple[int, int]]]:
    """(seat cell, adjacent walkable cell) pairs in the main region."""
    region = main_free_region(scene)
    out = []
    rows, cols = scene.occupancy.shape
    for r, c in np.argwhere(scene.occupancy == SEAT):
        for dr, dc in ((1, 0), (-1, 0), (0, 1), (0, -1)):
            nr, nc = r + dr, c + dc
            if (0 <= nr < rows and 0 <= nc < cols and region[nr, nc]
                    and scene.occupancy[nr, nc] == FREE):
                out.append(((int(r), int(c)), (int(nr), int(nc))))
                break
    return out
