"""End-to-end inference: destination sampling, path planning, pose refinement.

One rollout is one pass through the chain. Deterministic mode plans with a
zeroed destination channel and yields exactly one rollout; stochastic mode
draws K destinations from the goal model and yields one rollout per draw.
All randomness flows through an explicit per-sequence seed, so repeated runs
with the same config produce identical bundles.
"""

import os
from dataclasses import dataclass
from typing import List, Optional

import numpy as np

from .config import PipelineConfig
from .errors import CheckpointError
from .evalkit import SequencePrediction, SequenceTruth
from .geometry import PoseSequence2D
from .goalnet import (GoalNet, GoalSample, goalnet_from_checkpoint,
                      prepare_goal_inputs, sample_goals)
from .pathnet import (PathNet, build_path_input, pathnet_from_checkpoint,
                      predict_path)
from .posenet import (PoseNet, build_initial_estimate, posenet_from_checkpoint,
                      refine)


@dataclass
class Rollout:
    """One full prediction for one sequence.

    goal2d is the destination handed to the path planner in image pixels,
    None when the planner ran with the destination channel zeroed. path3d
    and poses3d cover the future frames only, in camera-frame meters.
    """

    goal2d: Optional[np.ndarray]
    path3d: np.ndarray  # [T, 3]
    poses3d: np.ndarray  # [T, J, 3]


@dataclass
class PredictionBundle:
    rollouts: List[Rollout]
    scene_id: int
    actor_id: int
    mode: str

    def __post_init__(self):
        if not self.rollouts:
            raise ValueError("bundle needs at least one rollout")


@dataclass
class StageModels:
    goalnet: Optional[GoalNet]
    pathnet: PathNet
    posenet: PoseNet


def _require_checkpoint(stage: str, path: str) -> str:
    if not path or not os.path.exists(path):
        raise CheckpointError(f"{stage} checkpoint missing: {path!r}")
    return path


def load_models(config: PipelineConfig,
                need_goal: Optional[bool] = None) -> StageModels:
    """Load the stage checkpoints the configured mode needs.

    The goal model is loaded only for stochastic mode (or when forced via
    need_goal). A missing file raises an error naming the stage.
    """
    if need_goal is None:
        need_goal = config.mode == "stochastic"
    goal = None
    if need_goal:
        goal = goalnet_from_checkpoint(
            _require_checkpoint("goalnet", config.goal_checkpoint))
    path = pathnet_from_checkpoint(
        _require_checkpoint("pathnet", config.path_checkpoint))
    pose = posenet_from_checkpoint(
        _require_checkpoint("posenet", config.pose_checkpoint))
    return StageModels(goalnet=goal, pathnet=path, posenet=pose)


def sequence_seed(seed: int, scene_id: int, actor_id: int) -> int:
    """Stable per-sequence stream so bundles never depend on visit order."""
    return int(np.random.SeedSequence(
        (seed, scene_id, actor_id)).generate_state(1)[0])


def _rollout(models: StageModels, config: PipelineConfig, sample,
             goal2d: Optional[np.ndarray], path_mode: str) -> Rollout:
    n = config.n_history
    history2d = sample.poses2d.values[:n]
    inp = build_path_input(sample.image, history2d, sample.camera,
                           models.pathnet.config, goal_destination=goal2d)
    path_pred = predict_path(models.pathnet, inp, mode=path_mode)
    history = PoseSequence2D(values=history2d, frame_rate=config.fps)
    init = build_initial_estimate(history, path_pred.path3d, sample.camera)
    refined = refine(models.posenet, init)
    tag = None if goal2d is None else np.asarray(goal2d, dtype=np.float64).copy()
    return Rollout(goal2d=tag, path3d=path_pred.path3d[n:].copy(),
                   poses3d=refined.values)


def run_pipeline(config: PipelineConfig, sample,
                 models: Optional[StageModels] = None,
                 goal_override: Optional[np.ndarray] = None) -> PredictionBundle:
    """Predict one sequence. Pass models to amortize checkpoint loading.

    goal_override short-circuits destination sampling and plans a single
    goal-conditioned rollout toward the given pixel (used for oracle
    destination studies); otherwise config.mode decides the rollout set.
    """
    if models is None:
        models = load_models(
            config, need_goal=(config.mode == "stochastic"
                               and goal_override is None))
    if goal_override is not None:
        rollouts = [_rollout(models, config, sample, goal_override,
                             path_mode="goal-conditioned")]
    elif config.mode == "deterministic":
        rollouts = [_rollout(models, config, sample, None,
                             path_mode="deterministic")]
    else:
        if models.goalnet is None:
            raise CheckpointError("goalnet checkpoint missing: stochastic "
                                  "mode needs a loaded goal model")
        image_t, heatmaps_t, _, _ = prepare_goal_inputs(
            sample, models.goalnet.config)
        seed = sequence_seed(config.seed, sample.scene_id, sample.actor_id)
        goals = sample_goals(models.goalnet, image_t, heatmaps_t,
                             config.k, seed=seed)
        rollouts = [_rollout(models, config, sample, g.destination,
                             path_mode="goal-conditioned") for g in goals]
    return PredictionBundle(rollouts=rollouts, scene_id=sample.scene_id,
                            actor_id=sample.actor_id, mode=config.mode)


def bundle_predictions(bundle: PredictionBundle) -> List[SequencePrediction]:
    return [SequencePrediction(path3d=r.path3d, poses3d=r.poses3d)
            for r in bundle.rollouts]


def truth_from_sample(sample, n_history: int, torso_joint: int) -> SequenceTruth:
    future = sample.poses3d.values[n_history:]
    return SequenceTruth(path3d=future[:, torso_joint, :].copy(),
                         poses3d=future.copy())
