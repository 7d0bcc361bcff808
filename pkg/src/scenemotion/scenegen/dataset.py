"""Dataset records and their on-disk format.

Layout under a dataset root:

    manifest.txt                     key=value: counts, sizes, skeleton, seed
    scene012_seq034/
        image.png                    rendered scene, H x W x 3
        camera.txt                   pinhole intrinsics, key=value text
        poses2d.bin                  framed joint table, [frames][J][2]
        poses3d.bin                  framed joint table, [frames][J][3]
        meta.txt                     ids, split, activity, destination

Framed joint tables: magic "FJT1", three little-endian uint32 (frames,
joints, dims), then frames*joints*dims little-endian float32, row-major.
Generated 3D values are quantized to float32 before the 2D projection is
computed, so poses3d round-trips bit-exactly and the in-memory consistency
poses2d = project(poses3d) is exact; the stored 2D loses only the float32
mantissa of a pixel coordinate (<= 3e-5 px at width 448), which is the
format's resolution. Text fields use full-precision repr and round-trip
exactly. Corrupt records raise DataError naming the file and field.
"""

from __future__ import annotations

import os
import struct
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

import numpy as np
from PIL import Image

from ..errors import DataError
from ..geometry import CameraModel, PoseSequence2D, PoseSequence3D

MAGIC = b"FJT1"
TORSO_DEPTH_RANGE = (0.5, 10.0)
# float32 quantization of stored pixel coordinates, with headroom
PROJECTION_TOLERANCE_PX = 1e-3


@dataclass
class SceneSample:
    """One sequence: scene image, camera, camera-frame pose tracks."""

    image: np.ndarray  # [H, W, 3] uint8
    camera: CameraModel
    poses2d: PoseSequence2D  # pixels, frames 1..N+T
    poses3d: PoseSequence3D  # camera frame, meters
    destination2d: np.ndarray  # torso pixel coords at the final frame
    scene_id: int
    actor_id: int
    split: str  # train / test
    activity: str = "walk"


def _dir_name(sample: SceneSample) -> str:
    return f"scene{sample.scene_id:03d}_seq{sample.actor_id:03d}"


def write_joint_table(path: str, values: np.ndarray) -> None:
    values = np.asarray(values)
    if values.ndim != 3 or values.shape[2] not in (2, 3):
        raise ValueError("joint table must be [frames, joints, 2|3]")
    frames, joints, dims = values.shape
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<III", frames, joints, dims))
        fh.write(values.astype("<f4").tobytes())


def read_joint_table(path: str) -> np.ndarray:
    name = os.path.basename(path)
    if not os.path.exists(path):
        raise DataError(f"{name}: file missing")
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < 16:
        raise DataError(f"{name}: header truncated")
    if blob[:4] != MAGIC:
        raise DataError(f"{name}: field magic is {blob[:4]!r}, expected {MAGIC!r}")
    frames, joints, dims = struct.unpack("<III", blob[4:16])
    if dims not in (2, 3):
        raise DataError(f"{name}: field dims is {dims}, expected 2 or 3")
    if frames < 1 or joints < 1:
        raise DataError(f"{name}: field frames/joints must be >= 1")
    want = 16 + frames * joints * dims * 4
    if len(blob) != want:
        raise DataError(f"{name}: payload is {len(blob)} bytes, expected {want}")
    flat = np.frombuffer(blob, dtype="<f4", offset=16)
    values = flat.reshape(frames, joints, dims).astype(np.float64)
    if not np.all(np.isfinite(values)):
        raise DataError(f"{name}: field values contain non-finite entries")
    return values


def _write_kv(path: str, pairs: Dict[str, str]) -> None:
    with open(path, "w") as fh:
        for key, value in pairs.items():
            fh.write(f"{key}={value}\n")


def _read_kv(path: str) -> Dict[str, str]:
    name = os.path.basename(path)
    if not os.path.exists(path):
        raise DataError(f"{name}: file missing")
    out = {}
    with open(path) as fh:
        for line_no, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            if "=" not in line:
                raise DataError(f"{name}: line {line_no} is not key=value")
            key, value = line.split("=", 1)
            out[key] = value
    return out


def _kv_float(kv: Dict[str, str], name: str, key: str) -> float:
    if key not in kv:
        raise DataError(f"{name}: field {key} missing")
    try:
        return float(kv[key])
    except ValueError as exc:
        raise DataError(f"{name}: field {key} is not a number") from exc


def _kv_int(kv: Dict[str, str], name: str, key: str) -> int:
    if key not in kv:
        raise DataError(f"{name}: field {key} missing")
    try:
        return int(kv[key])
    except ValueError as exc:
        raise DataError(f"{name}: field {key} is not an integer") from exc


def write_dataset(samples: List[SceneSample], root: str,
                  manifest: Dict[str, str]) -> None:
    os.makedirs(root, exist_ok=True)
    _write_kv(os.path.join(root, "manifest.txt"),
              {k: str(v) for k, v in manifest.items()})
    for sample in samples:
        d = os.path.join(root, _dir_name(sample))
        os.makedirs(d, exist_ok=True)
        Image.fromarray(sample.image).save(os.path.join(d, "image.png"))
        cam = sample.camera
        _write_kv(os.path.join(d, "camera.txt"), {
            "fx": repr(float(cam.fx)), "fy": repr(float(cam.fy)),
            "cx": repr(float(cam.cx)), "cy": repr(float(cam.cy)),
            "width": str(int(cam.width)), "height": str(int(cam.height)),
        })
        write_joint_table(os.path.join(d, "poses2d.bin"), sample.poses2d.values)
        write_joint_table(os.path.join(d, "poses3d.bin"), sample.poses3d.values)
        _write_kv(os.path.join(d, "meta.txt"), {
            "scene_id": str(sample.scene_id),
            "actor_id": str(sample.actor_id),
            "split": sample.split,
            "activity": sample.activity,
            "destination_u": repr(float(sample.destination2d[0])),
            "destination_v": repr(float(sample.destination2d[1])),
            "frames": str(sample.poses2d.frames),
        })


def read_manifest(root: str) -> Dict[str, str]:
    path = os.path.join(root, "manifest.txt")
    if not os.path.exists(path):
        raise DataError(f"manifest.txt: file missing under {root}")
    kv = _read_kv(path)
    for key in ("joints", "n_history", "n_future", "fps", "image_height",
                "image_width", "joint_names", "joint_parents", "torso_index"):
        if key not in kv:
            raise DataError(f"manifest.txt: field {key} missing")
    return kv


def _sequence_dirs(root: str) -> List[str]:
    return sorted(
        d for d in os.listdir(root)
        if os.path.isdir(os.path.join(root, d)) and d.startswith("scene"))


def read_sample(root: str, dirname: str, fps: float) -> SceneSample:
    d = os.path.join(root, dirname)
    image_path = os.path.join(d, "image.png")
    if not os.path.exists(image_path):
        raise DataError(f"{dirname}/image.png: file missing")
    image = np.asarray(Image.open(image_path).convert("RGB"))
    ckv = _read_kv(os.path.join(d, "camera.txt"))
    cname = f"{dirname}/camera.txt"
    camera = CameraModel(
        fx=_kv_float(ckv, cname, "fx"), fy=_kv_float(ckv, cname, "fy"),
        cx=_kv_float(ckv, cname, "cx"), cy=_kv_float(ckv, cname, "cy"),
        width=_kv_int(ckv, cname, "width"),
        height=_kv_int(ckv, cname, "height"))
    poses2d = read_joint_table(os.path.join(d, "poses2d.bin"))
    poses3d = read_joint_table(os.path.join(d, "poses3d.bin"))
    mkv = _read_kv(os.path.join(d, "meta.txt"))
    mname = f"{dirname}/meta.txt"
    dest = np.array([_kv_float(mkv, mname, "destination_u"),
                     _kv_float(mkv, mname, "destination_v")])
    split = mkv.get("split", "")
    if split not in ("train", "test"):
        raise DataError(f"{mname}: field split is {split!r}")
    return SceneSample(
        image=image, camera=camera,
        poses2d=PoseSequence2D(values=poses2d, frame_rate=fps),
        poses3d=PoseSequence3D(values=poses3d, frame_rate=fps),
        destination2d=dest,
        scene_id=_kv_int(mkv, mname, "scene_id"),
        actor_id=_kv_int(mkv, mname, "actor_id"),
        split=split,
        activity=mkv.get("activity", "walk"),
    )


def read_dataset(root: str, split: Optional[str] = None,
                 ) -> Tuple[List[SceneSample], Dict[str, str]]:
    manifest = read_manifest(root)
    fps = float(manifest["fps"])
    samples = [read_sample(root, d, fps) for d in _sequence_dirs(root)]
    if split is not None:
        samples = [s for s in samples if s.split == split]
    return samples, manifest


def validate_sample(sample: SceneSample, n_history: int, n_future: int,
                    torso_index: int, image_size: Tuple[int, int],
                    where: str = "sample",
                    tolerance_px: float = PROJECTION_TOLERANCE_PX) -> None:
    """Raise DataError naming the offending file/field on any violation."""
    frames = n_history + n_future
    if sample.poses2d.frames != frames:
        raise DataError(
            f"{where}/poses2d.bin: field frames is {sample.poses2d.frames}, "
            f"expected {frames}")
    if sample.poses3d.frames != frames:
        raise DataError(
            f"{where}/poses3d.bin: field frames is {sample.poses3d.frames}, "
            f"expected {frames}")
    if sample.poses2d.joint_count != sample.poses3d.joint_count:
        raise DataError(f"{where}/poses2d.bin: joint count differs from poses3d")
    if sample.image.shape[:2] != image_size:
        raise DataError(
            f"{where}/image.png: field size is {sample.image.shape[:2]}, "
            f"expected {image_size}")
    depths = sample.poses3d.values[:, torso_index, 2]
    lo, hi = TORSO_DEPTH_RANGE
    if depths.min() <= lo or depths.max() >= hi:
        raise DataError(
            f"{where}/poses3d.bin: field torso depth outside ({lo}, {hi})")
    projected = sample.camera.project(sample.poses3d.values)
    err = np.abs(projected - sample.poses2d.values).max()
    if err > tolerance_px:
        raise DataError(
            f"{where}/poses2d.bin: field values disagree with the projected "
            f"3D poses by {err:.2e} px")
    dest_err = np.abs(
        sample.poses2d.values[-1, torso_index] - sample.destination2d).max()
    if dest_err > tolerance_px:
        raise DataError(
            f"{where}/meta.txt: field destination differs from the final "
            f"torso by {dest_err:.2e} px")


def validate_dataset(root: str) -> Dict[str, int]:
    """Full-pass validation; returns counts on success."""
    manifest = read_manifest(root)
    fps = float(manifest["fps"])
    n_history = int(manifest["n_history"])
    n_future = int(manifest["n_future"])
    torso = int(manifest["torso_index"])
    image_size = (int(manifest["image_height"]), int(manifest["image_width"]))
    dirs = _sequence_dirs(root)
    if not dirs:
        raise DataError(f"manifest.txt: dataset under {root} has no sequences")
    counts = {"sequences": 0, "train": 0, "test": 0}
    scene_split: Dict[int, str] = {}
    for dirname in dirs:
        sample = read_sample(root, dirname, fps)
        validate_sample(sample, n_history, n_future, torso, image_size,
                        where=dirname)
        prior = scene_split.setdefault(sample.scene_id, sample.split)
        if prior != sample.split:
            raise DataError(
                f"{dirname}/meta.txt: field split is {sample.split!r} but "
                f"scene {sample.scene_id} already has {prior!r}")
        counts["sequences"] += 1
        counts[sample.split] += 1
    return counts
