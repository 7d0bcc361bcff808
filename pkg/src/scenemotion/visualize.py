"""Diagnostic images: pose-history overlay, top-down paths, error curves.

The overlay paints 3x3 squares straight into the pixel array, so marker
centers land exactly on the rounded coordinates and can be recovered from
the saved file. Color code: blue history track, green ground-truth
destination, red sampled destinations.
"""

import os
from typing import Iterable, Optional, Sequence

import numpy as np
from PIL import Image

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt

from .errors import DataError
from .evalkit import parse_error_curves

HISTORY_COLOR = (40, 80, 255)
GT_COLOR = (40, 220, 40)
SAMPLE_COLOR = (255, 40, 40)
MARKER_RADIUS = 1  # 3x3 squares


def _paint_square(image: np.ndarray, point, color,
                  radius: int = MARKER_RADIUS) -> None:
    h, w = image.shape[:2]
    u = int(round(float(point[0])))
    v = int(round(float(point[1])))
    if u < -radius or u >= w + radius or v < -radius or v >= h + radius:
        return
    r0, r1 = max(0, v - radius), min(h, v + radius + 1)
    c0, c1 = max(0, u - radius), min(w, u + radius + 1)
    image[r0:r1, c0:c1] = color


def overlay_image(image: np.ndarray, history_track: np.ndarray,
                  gt_destination: Optional[np.ndarray] = None,
                  sampled_destinations: Iterable[np.ndarray] = (),
                  ) -> np.ndarray:
    """Scene image with the history track and destination markers painted in."""
    out = np.ascontiguousarray(image, dtype=np.uint8).copy()
    for point in np.asarray(history_track, dtype=np.float64).reshape(-1, 2):
        _paint_square(out, point, HISTORY_COLOR)
    if gt_destination is not None:
        _paint_square(out, gt_destination, GT_COLOR)
    for point in sampled_destinations:
        _paint_square(out, point, SAMPLE_COLOR)
    return out


def plot_paths(history3d: np.ndarray, gt_future3d: Optional[np.ndarray],
               predicted_paths: Sequence[np.ndarray], out_path: str) -> None:
    """Top-down (x, z) view of the torso tracks, one line per rollout."""
    fig, ax = plt.subplots(figsize=(5, 5))
    hist = np.asarray(history3d, dtype=np.float64)
    ax.plot(hist[:, 0], hist[:, 2], "o-", color="tab:blue", label="history")
    if gt_future3d is not None and len(gt_future3d):
        gt = np.asarray(gt_future3d, dtype=np.float64)
        tied = np.concatenate([hist[-1:], gt], axis=0)
        ax.plot(tied[:, 0], tied[:, 2], "o-", color="tab:green",
                label="ground truth")
    for i, path in enumerate(predicted_paths):
        path = np.asarray(path, dtype=np.float64)
        tied = np.concatenate([hist[-1:], path], axis=0)
        ax.plot(tied[:, 0], tied[:, 2], "-", color="gold",
                label="predicted" if i == 0 else None)
    ax.set_xlabel("x (m)")
    ax.set_ylabel("z (m)")
    ax.set_title("top-down torso path")
    ax.legend(loc="best")
    ax.set_aspect("equal", adjustable="datalim")
    fig.tight_layout()
    fig.savefig(out_path, dpi=120)
    plt.close(fig)


def plot_error_curves(curves_text: str, out_path: str) -> None:
    """Pose error vs timestep, one line per K, from an error-curve table."""
    rows = parse_error_curves(curves_text)
    by_k = {}
    for timestep, k, _path_mm, pose_mm in rows:
        if timestep is None:
            continue
        by_k.setdefault(k, []).append((timestep, pose_mm))
    fig, ax = plt.subplots(figsize=(5, 4))
    for k in sorted(by_k):
        pts = sorted(by_k[k])
        ax.plot([p[0] for p in pts], [p[1] for p in pts], "o-",
                label=f"K={k}")
    ax.set_xlabel("time (s)")
    ax.set_ylabel("pose error (mm)")
    ax.set_title("pose error over the horizon")
    ax.legend(loc="best")
    fig.tight_layout()
    fig.savefig(out_path, dpi=120)
    plt.close(fig)


def visualize(bundle, sample, out_dir: str, torso_joint: int = 4,
              curves_text: Optional[str] = None) -> dict:
    """Emit overlay.png, paths.png and (given a table) error_curves.png.

    Returns {name: path} for the files written. The history length is
    recovered from the rollout horizon; a sample with no future frames gets
    a history-only overlay.
    """
    os.makedirs(out_dir, exist_ok=True)
    total = sample.poses2d.values.shape[0]
    horizon = bundle.rollouts[0].path3d.shape[0]
    n = total - horizon
    if n < 1:
        raise DataError(
            f"sample has {total} frames but rollouts predict {horizon}")
    history_track = sample.poses2d.values[:n, torso_joint, :]
    gt_destination = sample.destination2d if total > n else None
    goals = [r.goal2d for r in bundle.rollouts if r.goal2d is not None]

    written = {}
    overlay = overlay_image(sample.image, history_track, gt_destination, goals)
    overlay_path = os.path.join(out_dir, "overlay.png")
    try:
        Image.fromarray(overlay).save(overlay_path)
    except OSError as exc:
        raise DataError(f"could not write {overlay_path}: {exc}") from exc
    written["overlay"] = overlay_path

    history3d = sample.poses3d.values[:n, torso_joint, :]
    gt_future3d = sample.poses3d.values[n:, torso_joint, :]
    paths_path = os.path.join(out_dir, "paths.png")
    plot_paths(history3d, gt_future3d if total > n else None,
               [r.path3d for r in bundle.rollouts], paths_path)
    written["paths"] = paths_path

    if curves_text is not None:
        curves_path = os.path.join(out_dir, "error_curves.png")
        plot_error_curves(curves_text, curves_path)
        written["curves"] = curves_path
    return written
