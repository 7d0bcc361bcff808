"""End-to-end sample generation: room, actor, camera, rendered record.

Every stage draws from its own child seed, so any (seed, scene, actor)
triple regenerates byte-identically without touching the others. Camera
placement sees the full joint cloud, which keeps every joint of every
frame inside the image and inside the working depth range, not just the
torso. 3D poses are quantized to float32 before projection so that the
stored tables and the in-memory consistency checks agree exactly.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, List, Optional, Tuple

import numpy as np

from ..errors import DataError
from ..geometry import PoseSequence2D, PoseSequence3D
from .camera import sample_camera
from .dataset import SceneSample, write_dataset
from .posesynth import (JOINT_NAMES, JOINT_PARENTS, TORSO_INDEX,
                        default_skeleton, synthesize_pose)
from .render import render_scene
from .scene import SceneMap, generate_scene
from .trajectory import generate_trajectory

FORMAT_VERSION = 1


@dataclass
class GenerateConfig:
    scenes: int = 10
    sequences_per_scene: int = 50
    seed: int = 0
    image_size: Tuple[int, int] = (256, 448)  # (height, width)
    fps: float = 10.0
    n_history: int = 10
    n_future: int = 20
    room_size_m: Tuple[float, float] = (10.0, 14.0)
    meters_per_cell: float = 0.25
    empty_rooms: bool = False
    train_fraction: float = 0.8
    retries: int = 60

    def __post_init__(self):
        if self.scenes < 1 or self.sequences_per_scene < 1:
            raise ValueError("scenes and sequences_per_scene must be >= 1")
        if self.n_history < 1 or self.n_future < 1:
            raise ValueError("n_history and n_future must be >= 1")
        if not 0.0 < self.train_fraction < 1.0:
            raise ValueError("train_fraction must be in (0, 1)")

    @property
    def total_frames(self) -> int:
        return self.n_history + self.n_future


def _child_seed(*entropy: int) -> int:
    return int(np.random.SeedSequence(entropy=entropy).generate_state(1)[0])


def scene_splits(cfg: GenerateConfig) -> List[str]:
    """Scene-disjoint train/test assignment, deterministic in the seed."""
    if cfg.scenes == 1:
        return ["train"]
    rng = np.random.default_rng(np.random.SeedSequence(
        entropy=(cfg.seed, 777)))
    order = rng.permutation(cfg.scenes)
    n_train = int(round(cfg.train_fraction * cfg.scenes))
    n_train = min(max(n_train, 1), cfg.scenes - 1)
    splits = ["test"] * cfg.scenes
    for sid in order[:n_train]:
        splits[int(sid)] = "train"
    return splits


def generate_sample(scene: SceneMap, cfg: GenerateConfig, scene_id: int,
                    actor_id: int, split: str) -> SceneSample:
    """One sequence in one scene; deterministic, bounded retries."""
    skeleton = default_skeleton()
    frames = cfg.total_frames
    for attempt in range(cfg.retries):
        try:
            traj = generate_trajectory(
                scene, _child_seed(cfg.seed, scene_id, actor_id, attempt, 0),
                n_frames=frames, fps=cfg.fps)
            poses_world = synthesize_pose(
                traj.torso, traj.gait_phase, skeleton, seated=traj.seated,
                frame_rate=cfg.fps)
            cloud = poses_world.values.reshape(-1, 3)
            camera, pose = sample_camera(
                scene, cloud, _child_seed(cfg.seed, scene_id, actor_id,
                                          attempt, 1),
                image_size=cfg.image_size,
                target=traj.torso[frames // 2])
        except DataError:
            continue
        cam3d = pose.world_to_camera(cloud).reshape(frames, -1, 3)
        # storage grid: the binary tables hold float32
        cam3d = cam3d.astype(np.float32).astype(np.float64)
        poses2d = camera.project(cam3d)
        return SceneSample(
            image=render_scene(scene, camera, pose),
            camera=camera,
            poses2d=PoseSequence2D(values=poses2d, frame_rate=cfg.fps),
            poses3d=PoseSequence3D(values=cam3d, frame_rate=cfg.fps),
            destination2d=poses2d[-1, TORSO_INDEX].copy(),
            scene_id=scene_id,
            actor_id=actor_id,
            split=split,
            activity=traj.activity,
        )
    raise DataError(
        f"scene {scene_id} actor {actor_id}: no viable trajectory/camera "
        f"pair after {cfg.retries} attempts")


def build_manifest(cfg: GenerateConfig) -> Dict[str, str]:
    return {
        "format_version": str(FORMAT_VERSION),
        "scenes": str(cfg.scenes),
        "sequences_per_scene": str(cfg.sequences_per_scene),
        "seed": str(cfg.seed),
        "fps": repr(cfg.fps),
        "n_history": str(cfg.n_history),
        "n_future": str(cfg.n_future),
        "joints": str(len(JOINT_NAMES)),
        "torso_index": str(TORSO_INDEX),
        "joint_names": ",".join(JOINT_NAMES),
        "joint_parents": ",".join(str(p) for p in JOINT_PARENTS),
        "image_height": str(cfg.image_size[0]),
        "image_width": str(cfg.image_size[1]),
        "empty_rooms": str(int(cfg.empty_rooms)),
    }


def generate_dataset(cfg: GenerateConfig, out_dir: Optional[str] = None,
                     ) -> Tuple[List[SceneSample], Dict[str, str]]:
    """All samples for the config; optionally written under out_dir."""
    splits = scene_splits(cfg)
    samples = []
    for scene_id in range(cfg.scenes):
        scene = generate_scene(
            _child_seed(cfg.seed, scene_id),
            room_size_m=cfg.room_size_m,
            meters_per_cell=cfg.meters_per_cell,
            empty=cfg.empty_rooms)
        for actor_id in range(cfg.sequences_per_scene):
            samples.append(generate_sample(
                scene, cfg, scene_id, actor_id, splits[scene_id]))
    manifest = build_manifest(cfg)
    if out_dir is not None:
        write_dataset(samples, out_dir, manifest)
    return samples, manifest
