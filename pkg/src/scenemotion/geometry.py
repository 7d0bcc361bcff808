"""Camera math, skeleton conventions, heatmap rendering, and soft-argmax.

Coordinate conventions used everywhere in this package:

  * Pixel coordinates are (u, v) with u = column and v = row, origin at the
    top-left of the image, continuous coordinates at cell centers. A heatmap
    cell (row r, col c) therefore sits at image coordinates
    (u, v) = (c * stride, r * stride).
  * 3D points live in the camera frame: x right, y down, z forward (meters).
    Valid points have z > 0.
  * Depths are normalized for network consumption by clamping to
    [0, DEPTH_CAP_M] meters and dividing by DEPTH_SCALE, so network space is
    [0, 2.5]. denormalize(normalize(d)) == min(d, DEPTH_CAP_M).

All functions accept numpy arrays; the differentiable ones (soft_argmax,
projection, back-projection) also accept torch tensors and then stay in torch
so gradients flow.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence, Tuple, Union

import numpy as np
import torch

ArrayLike = Union[np.ndarray, torch.Tensor]

DEPTH_CAP_M = 10.0
DEPTH_SCALE = 4.0


def _is_torch(x) -> bool:
    return isinstance(x, torch.Tensor)


def _stack_last(parts, torch_mode: bool):
    if torch_mode:
        return torch.stack(parts, dim=-1)
    return np.stack(parts, axis=-1)


@dataclass(frozen=True)
class CameraModel:
    """Pinhole intrinsics plus image extent. All units are pixels."""

    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int

    def __post_init__(self):
        if not (self.fx > 0 and self.fy > 0):
            raise ValueError("focal lengths must be positive")
        if not (0 <= self.cx < self.width and 0 <= self.cy < self.height):
            raise ValueError("principal point must lie inside the image")

    def project(self, points3d: ArrayLike) -> ArrayLike:
        """Map camera-frame points [..., 3] to pixel coords [..., 2].

        Raises ValueError for any point with z <= 0 (behind the camera).
        """
        tm = _is_torch(points3d)
        x, y, z = points3d[..., 0], points3d[..., 1], points3d[..., 2]
        bad = (z <= 0).any() if tm else np.any(np.asarray(z) <= 0)
        if bad:
            raise ValueError("cannot project points with z <= 0")
        u = self.fx * x / z + self.cx
        v = self.fy * y / z + self.cy
        return _stack_last([u, v], tm)

    def back_project(self, pixels: ArrayLike, depths: ArrayLike) -> ArrayLike:
        """Map pixel coords [..., 2] plus depths [...] to 3D points [..., 3].

        Raises ValueError for any nonpositive depth.
        """
        tm = _is_torch(pixels) or _is_torch(depths)
        u, v = pixels[..., 0], pixels[..., 1]
        bad = (depths <= 0).any() if _is_torch(depths) else np.any(np.asarray(depths) <= 0)
        if bad:
            raise ValueError("cannot back-project with depth <= 0")
        x = (u - self.cx) * depths / self.fx
        y = (v - self.cy) * depths / self.fy
        if tm and not _is_torch(depths):
            depths = torch.as_tensor(depths, dtype=u.dtype, device=u.device)
        z = depths + (x * 0)  # broadcast to the pixel batch shape
        return _stack_last([x, y, z], tm)


@dataclass(frozen=True)
class Skeleton:
    """Named kinematic tree. root_index is the torso/center joint."""

    joint_count: int
    root_index: int
    joint_names: Tuple[str, ...]
    parent_indices: Tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "joint_names", tuple(self.joint_names))
        object.__setattr__(self, "parent_indices", tuple(self.parent_indices))
        j = self.joint_count
        if not (0 <= self.root_index < j):
            raise ValueError("root_index out of range")
        if len(self.joint_names) != j or len(self.parent_indices) != j:
            raise ValueError("joint_names and parent_indices must have length J")
        roots = [i for i, p in enumerate(self.parent_indices) if p < 0]
        if roots != [self.root_index]:
            raise ValueError("parent_indices must mark exactly the root with -1")
        # Walking up from every joint must terminate at the root (single tree).
        for i in range(j):
            seen = set()
            node = i
            while node != self.root_index:
                if node in seen or not (0 <= node < j):
                    raise ValueError("parent_indices does not form a rooted tree")
                seen.add(node)
                node = self.parent_indices[node]


def _check_values(values: np.ndarray, last_dim: int, name: str) -> np.ndarray:
    values = np.asarray(values, dtype=np.float64)
    if values.ndim != 3 or values.shape[2] != last_dim:
        raise ValueError(f"{name} must have shape [frames, J, {last_dim}]")
    if values.shape[0] < 1:
        raise ValueError(f"{name} needs at least one frame")
    if not np.all(np.isfinite(values)):
        raise ValueError(f"{name} contains non-finite values")
    return values


@dataclass
class PoseSequence2D:
    """Pixel-space joint track, shape [frames, J, 2], (u, v) per joint."""

    values: np.ndarray
    frame_rate: float

    def __post_init__(self):
        self.values = _check_values(self.values, 2, "PoseSequence2D")
        if self.frame_rate <= 0:
            raise ValueError("frame_rate must be positive")

    @property
    def frames(self) -> int:
        return self.values.shape[0]

    @property
    def joint_count(self) -> int:
        return self.values.shape[1]


@dataclass
class PoseSequence3D:
    """Camera-frame joint track in meters, shape [frames, J, 3]."""

    values: np.ndarray
    frame_rate: float

    def __post_init__(self):
        self.values = _check_values(self.values, 3, "PoseSequence3D")
        if self.frame_rate <= 0:
            raise ValueError("frame_rate must be positive")

    @property
    def frames(self) -> int:
        return self.values.shape[0]

    @property
    def joint_count(self) -> int:
        return self.values.shape[1]

    def validate_depths(self) -> None:
        """Assert the camera-frame invariant z > 0 for every joint."""
        if not np.all(self.values[:, :, 2] > 0):
            raise ValueError("PoseSequence3D has nonpositive depth components")


@dataclass
class DepthSequence:
    """Per-frame torso depth in meters with its normalization constants."""

    values: np.ndarray
    cap_m: float = DEPTH_CAP_M
    scale: float = DEPTH_SCALE

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim != 1:
            raise ValueError("DepthSequence values must be 1-D [frames]")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("DepthSequence contains non-finite values")
        if not np.all(self.values > 0):
            raise ValueError("raw depths must be positive")

    def normalized(self) -> np.ndarray:
        return normalize_depth(self.values, self.cap_m, self.scale)


def normalize_depth(depth: ArrayLike, cap_m: float = DEPTH_CAP_M,
                    scale: float = DEPTH_SCALE) -> ArrayLike:
    """Clamp meters to [0, cap_m], then divide by scale."""
    if _is_torch(depth):
        return torch.clamp(depth, 0.0, cap_m) / scale
    return np.clip(depth, 0.0, cap_m) / scale


def denormalize_depth(value: ArrayLike, scale: float = DEPTH_SCALE) -> ArrayLike:
    """Inverse of normalize_depth on [0, cap_m]: multiply by scale."""
    return value * scale


@dataclass
class Heatmap:
    """Spatial keypoint likelihood grid.

    grid is [height, width] with nonnegative values; stride is the ratio of
    image resolution to grid resolution (image px = grid coord * stride).
    """

    grid: np.ndarray
    stride: float = 1.0

    def __post_init__(self):
        self.grid = np.asarray(self.grid)
        if self.grid.ndim != 2:
            raise ValueError("Heatmap grid must be 2-D")
        if not np.all(np.isfinite(self.grid)):
            raise ValueError("Heatmap grid contains non-finite values")
        if np.any(self.grid < 0):
            raise ValueError("Heatmap grid must be nonnegative")
        if self.stride <= 0:
            raise ValueError("stride must be positive")


def render_heatmap(point: Sequence[float], sigma: float,
                   shape: Tuple[int, int], stride: float = 1.0) -> Heatmap:
    """Render an unnormalized Gaussian bump centered at an image-space point.

    The bump is exp(-||g - point/stride||^2 / (2 sigma^2)) over grid coords g,
    so sigma is measured in grid cells and the peak value is exactly 1 when
    the point lies on a grid node. Points outside the image still render
    (clipped tail); NaN coordinates raise.
    """
    point = np.asarray(point, dtype=np.float64)
    if point.shape != (2,) or not np.all(np.isfinite(point)):
        raise ValueError("point must be two finite coordinates")
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    h, w = int(shape[0]), int(shape[1])
    if h <= 0 or w <= 0:
        raise ValueError("shape must be positive")
    grid = render_heatmap_stack(point[None, :], sigma, (h, w), stride)[0]
    return Heatmap(grid=grid, stride=stride)


def render_heatmap_stack(points: np.ndarray, sigma: float,
                         shape: Tuple[int, int], stride: float = 1.0) -> np.ndarray:
    """Vectorized Gaussian rendering for M points -> [M, H, W] float32.

    Separable: the 2D bump is the outer product of its row and column factors.
    """
    points = np.asarray(points, dtype=np.float64)
    if points.ndim != 2 or points.shape[1] != 2:
        raise ValueError("points must be [M, 2]")
    if not np.all(np.isfinite(points)):
        raise ValueError("points contain non-finite values")
    h, w = int(shape[0]), int(shape[1])
    gu = points[:, 0] / stride
    gv = points[:, 1] / stride
    cols = np.arange(w, dtype=np.float64)
    rows = np.arange(h, dtype=np.float64)
    fx = np.exp(-((cols[None, :] - gu[:, None]) ** 2) / (2.0 * sigma * sigma))
    fy = np.exp(-((rows[None, :] - gv[:, None]) ** 2) / (2.0 * sigma * sigma))
    return (fy[:, :, None] * fx[:, None, :]).astype(np.float32)


def soft_argmax(heatmap: Union[Heatmap, ArrayLike], temperature: float = 1.0,
                stride: float = None) -> ArrayLike:
    """Differentiable sub-pixel peak location of a heatmap.

    p = softmax(temperature * flatten(h)); output = sum_i p_i * coord_i,
    rescaled by stride to image pixels, as (u, v). Accepts a Heatmap (uses its
    own stride), a numpy array, or a torch tensor shaped [..., H, W]; torch
    input keeps gradients.
    """
    if temperature <= 0:
        raise ValueError("temperature must be positive")
    if isinstance(heatmap, Heatmap):
        if stride is None:
            stride = heatmap.stride
        grid = heatmap.grid
    else:
        grid = heatmap
    if stride is None:
        stride = 1.0
    if _is_torch(grid):
        if torch.isnan(grid).any():
            raise ValueError("heatmap contains NaN")
        return _soft_argmax_torch(grid, temperature, stride)
    grid = np.asarray(grid, dtype=np.float64)
    if np.isnan(grid).any():
        raise ValueError("heatmap contains NaN")
    out = _soft_argmax_torch(torch.from_numpy(grid), temperature, stride)
    return out.numpy()


def _soft_argmax_torch(grid: torch.Tensor, temperature: float,
                       stride: float) -> torch.Tensor:
    h, w = grid.shape[-2], grid.shape[-1]
    lead = grid.shape[:-2]
    flat = grid.reshape(*lead, h * w)
    p = torch.softmax(temperature * flat, dim=-1).reshape(*lead, h, w)
    cols = torch.arange(w, dtype=p.dtype, device=p.device)
    rows = torch.arange(h, dtype=p.dtype, device=p.device)
    u = (p.sum(dim=-2) * cols).sum(dim=-1)
    v = (p.sum(dim=-1) * rows).sum(dim=-1)
    return torch.stack([u, v], dim=-1) * stride


def heatmap_expectation(heatmap: Union[Heatmap, ArrayLike],
                        stride: float = None) -> ArrayLike:
    """Coordinate expectation under an already-nonnegative weight grid.

    This is the second half of soft_argmax (no softmax applied); used when the
    grid already stores a probability distribution.
    """
    if isinstance(heatmap, Heatmap):
        if stride is None:
            stride = heatmap.stride
        grid = heatmap.grid
    else:
        grid = heatmap
    if stride is None:
        stride = 1.0
    tm = _is_torch(grid)
    if not tm:
        grid = np.asarray(grid, dtype=np.float64)
    total = grid.sum(-1).sum(-1)
    bad = (total <= 0).any() if tm else np.any(np.asarray(total) <= 0)
    if bad:
        raise ValueError("weight grid must have positive mass")
    h, w = grid.shape[-2], grid.shape[-1]
    if tm:
        cols = torch.arange(w, dtype=grid.dtype, device=grid.device)
        rows = torch.arange(h, dtype=grid.dtype, device=grid.device)
        u = (grid.sum(dim=-2) * cols).sum(dim=-1) / total
        v = (grid.sum(dim=-1) * rows).sum(dim=-1) / total
        return torch.stack([u, v], dim=-1) * stride
    cols = np.arange(w, dtype=np.float64)
    rows = np.arange(h, dtype=np.float64)
    u = (grid.sum(axis=-2) * cols).sum(axis=-1) / total
    v = (grid.sum(axis=-1) * rows).sum(axis=-1) / total
    return np.stack([u, v], axis=-1) * stride


def lift_pose_sequence(camera: CameraModel, poses2d: PoseSequence2D,
                       torso_depths: DepthSequence) -> PoseSequence3D:
    """Back-project every joint of frame t with the single torso depth d(t).

    The planar-person approximation: all joints of a frame share one depth,
    producing a deliberately noisy 3D estimate.
    """
    if poses2d.frames != torso_depths.values.shape[0]:
        raise ValueError("pose and depth frame counts differ")
    depths = torso_depths.values[:, None]  # [F, 1] broadcast over joints
    pts = camera.back_project(poses2d.values, depths)
    return PoseSequence3D(values=pts, frame_rate=poses2d.frame_rate)
