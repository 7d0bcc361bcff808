"""Evaluation protocol: joint-position errors at fixed time offsets.

Path error measures the torso track alone; pose error averages all
joints. Both are reported in millimeters at half-second offsets into the
future plus an "All" mean taken over every predicted frame (not over the
reported offsets). Stochastic predictors are scored best-of-K: per
sequence, the sample whose pose all-mean error is smallest is selected,
and every reported number comes from that one sample.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .errors import EvaluationError
from .geometry import PoseSequence3D

STEP_SECONDS = 0.5
MM_PER_M = 1000.0


@dataclass(frozen=True)
class SequencePrediction:
    """Predicted future for one sequence: torso path and full poses."""

    path3d: np.ndarray  # [T, 3] meters
    poses3d: np.ndarray  # [T, J, 3] meters


@dataclass(frozen=True)
class SequenceTruth:
    path3d: np.ndarray
    poses3d: np.ndarray


@dataclass
class ErrorReport:
    timesteps: Tuple[float, ...]  # seconds into the future
    path_mm: Dict[float, float]
    pose_mm: Dict[float, float]
    path_all_mm: float
    pose_all_mm: float
    samples_used: int
    mode: str

    def __post_init__(self):
        values = list(self.path_mm.values()) + list(self.pose_mm.values())
        values += [self.path_all_mm, self.pose_all_mm]
        if any(v < 0 for v in values):
            raise EvaluationError("error entries must be nonnegative")


def mpjpe(pred: PoseSequence3D, gt: PoseSequence3D,
          frame_index: int) -> float:
    """Mean over joints of the Euclidean error at one frame, in mm."""
    if pred.values.shape != gt.values.shape:
        raise EvaluationError(
            f"shape mismatch: {pred.values.shape} vs {gt.values.shape}")
    if not 0 <= frame_index < pred.frames:
        raise EvaluationError(
            f"frame_index {frame_index} outside 0..{pred.frames - 1}")
    diff = pred.values[frame_index] - gt.values[frame_index]
    return float(np.linalg.norm(diff, axis=-1).mean() * MM_PER_M)


def report_timesteps(n_future: int, fps: float) -> Tuple[float, ...]:
    """Half-second offsets that land inside the prediction horizon."""
    steps = []
    k = 1
    while True:
        seconds = k * STEP_SECONDS
        if int(round(seconds * fps)) > n_future:
            return tuple(steps)
        steps.append(seconds)
        k += 1


def _step_frame(seconds: float, fps: float) -> int:
    # 0.5 s after the present = the fps/2-th future frame, 0-based
    return int(round(seconds * fps)) - 1


def _pose_errors_mm(pred: np.ndarray, gt: np.ndarray) -> np.ndarray:
    """[T] mean-over-joints position error per future frame."""
    if pred.shape != gt.shape:
        raise EvaluationError(
            f"pose shape mismatch: {pred.shape} vs {gt.shape}")
    return np.linalg.norm(pred - gt, axis=-1).mean(axis=-1) * MM_PER_M


def _path_errors_mm(pred: np.ndarray, gt: np.ndarray) -> np.ndarray:
    if pred.shape != gt.shape:
        raise EvaluationError(
            f"path shape mismatch: {pred.shape} vs {gt.shape}")
    return np.linalg.norm(pred - gt, axis=-1) * MM_PER_M


def _aggregate(selected: List[SequencePrediction],
               truths: Sequence[SequenceTruth], fps: float,
               samples_used: int, mode: str) -> ErrorReport:
    path_frames = np.stack([
        _path_errors_mm(p.path3d, t.path3d)
        for p, t in zip(selected, truths)])
    pose_frames = np.stack([
        _pose_errors_mm(p.poses3d, t.poses3d)
        for p, t in zip(selected, truths)])
    n_future = path_frames.shape[1]
    steps = report_timesteps(n_future, fps)
    path_mm = {s: float(path_frames[:, _step_frame(s, fps)].mean())
               for s in steps}
    pose_mm = {s: float(pose_frames[:, _step_frame(s, fps)].mean())
               for s in steps}
    return ErrorReport(
        timesteps=steps, path_mm=path_mm, pose_mm=pose_mm,
        path_all_mm=float(path_frames.mean()),
        pose_all_mm=float(pose_frames.mean()),
        samples_used=samples_used, mode=mode)


def evaluate_deterministic(predictions: Sequence[SequencePrediction],
                           truths: Sequence[SequenceTruth],
                           fps: float = 10.0) -> ErrorReport:
    if len(predictions) == 0:
        raise EvaluationError("no sequences to evaluate")
    if len(predictions) != len(truths):
        raise EvaluationError("predictions and truths differ in length")
    return _aggregate(list(predictions), truths, fps, samples_used=1,
                      mode="deterministic")


def best_of_k(bundles: Sequence[Sequence[SequencePrediction]],
              truths: Sequence[SequenceTruth],
              fps: float = 10.0) -> ErrorReport:
    """Per sequence, keep the sample with the lowest pose all-mean error;
    every reported number then comes from that selected sample."""
    if len(bundles) == 0:
        raise EvaluationError("no sequences to evaluate")
    if len(bundles) != len(truths):
        raise EvaluationError("bundles and truths differ in length")
    k = len(bundles[0])
    if k < 1:
        raise EvaluationError("need at least one sample per sequence")
    if any(len(b) != k for b in bundles):
        raise EvaluationError("all sequences must carry the same K")
    selected = []
    for samples, truth in zip(bundles, truths):
        means = [float(_pose_errors_mm(s.poses3d, truth.poses3d).mean())
                 for s in samples]
        selected.append(samples[int(np.argmin(means))])
    mode = "deterministic" if k == 1 else f"best-of-{k}"
    return _aggregate(selected, truths, fps, samples_used=k, mode=mode)


def destination_error(samples: np.ndarray,
                      gt_destination: np.ndarray,
                      ) -> Tuple[float, float, float]:
    """(min, mean, std) of L2 pixel distances over K sampled goals."""
    samples = np.asarray(samples, dtype=np.float64)
    if samples.ndim != 2 or samples.shape[1] != 2 or samples.shape[0] < 1:
        raise EvaluationError("samples must be [K, 2] with K >= 1")
    d = np.linalg.norm(samples - np.asarray(gt_destination), axis=1)
    return float(d.min()), float(d.mean()), float(d.std())


def error_curves(reports: Sequence[ErrorReport]) -> str:
    """Delimited table (timestep, K, path_mm, pose_mm), one row per
    reported offset plus the All row; floats use repr so the table
    round-trips losslessly."""
    lines = ["timestep\tK\tpath_mm\tpose_mm"]
    for r in reports:
        for s in r.timesteps:
            lines.append(f"{s!r}\t{r.samples_used}\t"
                         f"{r.path_mm[s]!r}\t{r.pose_mm[s]!r}")
        lines.append(f"All\t{r.samples_used}\t"
                     f"{r.path_all_mm!r}\t{r.pose_all_mm!r}")
    return "\n".join(lines) + "\n"


def parse_error_curves(text: str) -> List[Tuple[Optional[float], int,
                                                float, float]]:
    """Rows of (timestep seconds or None for All, K, path_mm, pose_mm)."""
    lines = [l for l in text.splitlines() if l.strip()]
    if not lines or lines[0].split("\t") != ["timestep", "K", "path_mm",
                                             "pose_mm"]:
        raise EvaluationError("unrecognized curve table header")
    rows = []
    for line in lines[1:]:
        step, k, path, pose = line.split("\t")
        rows.append((None if step == "All" else float(step),
                     int(k), float(path), float(pose)))
    return rows


def format_report(report: ErrorReport) -> str:
    """Aligned two-row table: one column per offset plus All."""
    headers = [f"{s:g}s" for s in report.timesteps] + ["All"]
    rows = [
        ("path (mm)", [report.path_mm[s] for s in report.timesteps]
         + [report.path_all_mm]),
        ("pose (mm)", [report.pose_mm[s] for s in report.timesteps]
         + [report.pose_all_mm]),
    ]
    label_w = max(len(r[0]) for r in rows)
    cells = [[f"{v:.1f}" for v in vals] for _, vals in rows]
    widths = [max(len(h), max(len(row[i]) for row in cells))
              for i, h in enumerate(headers)]
    out = [f"mode={report.mode} K={report.samples_used}"]
    out.append(" " * label_w + "  "
               + "  ".join(h.rjust(w) for h, w in zip(headers, widths)))
    for (label, _), row in zip(rows, cells):
        out.append(label.ljust(label_w) + "  "
                   + "  ".join(v.rjust(w) for v, w in zip(row, widths)))
    return "\n".join(out) + "\n"
