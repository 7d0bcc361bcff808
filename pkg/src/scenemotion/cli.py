"""Command line front end.

Five subcommands: generate-data, train {goalnet|pathnet|posenet}, predict,
evaluate, visualize. The training and inference commands share one INI run
file. Exit codes: 0 success, 1 runtime failure, 2 bad configuration,
3 bad data, 4 missing or corrupt checkpoint.

Setting SCENEMOTION_DETERMINISTIC to a nonzero value switches torch to
deterministic kernels before any command runs.
"""

import argparse
import os
import sys
from typing import List, Optional

import numpy as np
import torch

from .config import PipelineConfig, check_manifest_consistency, load_config
from .errors import ConfigError, DataError, SceneMotionError
from .evalkit import (best_of_k, error_curves, evaluate_deterministic,
                      format_report)
from .goalnet import train_goalnet
from .pathnet import train_pathnet
from .pipeline import (StageModels, bundle_predictions, load_models,
                       run_pipeline, truth_from_sample)
from .posenet import train_posenet
from .scenegen import GenerateConfig, generate_dataset, read_dataset
from .visualize import visualize

STAGES = ("goalnet", "pathnet", "posenet")


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="scenemotion",
        description="Scene-aware long-term human motion forecasting.")
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("generate-data",
                         help="synthesize a dataset of rendered walks")
    gen.add_argument("--out", required=True, help="output dataset directory")
    gen.add_argument("--scenes", type=int, default=10)
    gen.add_argument("--sequences-per-scene", type=int, default=50)
    gen.add_argument("--seed", type=int, default=0)
    gen.add_argument("--image-height", type=int, default=256)
    gen.add_argument("--image-width", type=int, default=448)
    gen.add_argument("--fps", type=float, default=10.0)
    gen.add_argument("--n-history", type=int, default=10)
    gen.add_argument("--n-future", type=int, default=20)
    gen.add_argument("--train-fraction", type=float, default=0.8)
    gen.add_argument("--empty-rooms", action="store_true",
                     help="skip furniture placement")

    train = sub.add_parser("train", help="train one stage from the run file")
    train.add_argument("stage", choices=STAGES)
    train.add_argument("--config", required=True, help="INI run file")
    train.add_argument("--seed", type=int, default=None,
                       help="override the run file seed")

    pred = sub.add_parser("predict", help="run the pipeline on one sequence")
    pred.add_argument("--config", required=True)
    pred.add_argument("--sequence", default=None,
                      help="sequence directory name, default: first test one")

    ev = sub.add_parser("evaluate", help="error report over a dataset split")
    ev.add_argument("--config", required=True)
    ev.add_argument("--split", default="test", choices=("train", "test"))
    ev.add_argument("--curves", default=None,
                    help="also write the error table to this path")

    vis = sub.add_parser("visualize", help="diagnostic images for one sequence")
    vis.add_argument("--config", required=True)
    vis.add_argument("--sequence", default=None)
    vis.add_argument("--out", required=True, help="output image directory")
    return parser


def _cmd_generate(args) -> int:
    cfg = GenerateConfig(
        scenes=args.scenes,
        sequences_per_scene=args.sequences_per_scene,
        seed=args.seed,
        image_size=(args.image_height, args.image_width),
        fps=args.fps,
        n_history=args.n_history,
        n_future=args.n_future,
        train_fraction=args.train_fraction,
        empty_rooms=args.empty_rooms,
    )
    samples, _ = generate_dataset(cfg, out_dir=args.out)
    n_train = sum(1 for s in samples if s.split == "train")
    print(f"wrote {len(samples)} sequences to {args.out} "
          f"({n_train} train, {len(samples) - n_train} test)")
    return 0


def _load_run(path: str) -> PipelineConfig:
    return load_config(path)


def _load_split(config: PipelineConfig, split: Optional[str]):
    samples, manifest = read_dataset(config.dataset_dir, split=split)
    check_manifest_consistency(config, manifest)
    if not samples:
        raise DataError(
            f"no {split or 'any'} sequences under {config.dataset_dir}")
    return samples


def _cmd_train(args) -> int:
    config = _load_run(args.config)
    seed = config.seed if args.seed is None else args.seed
    samples = _load_split(config, "train")
    print(f"training {args.stage} on {len(samples)} sequences (seed {seed})")
    if args.stage == "goalnet":
        train_goalnet(samples, config.goalnet_config(), seed,
                      checkpoint_path=config.goal_checkpoint, log=print)
        print(f"saved {config.goal_checkpoint}")
    elif args.stage == "pathnet":
        train_pathnet(samples, config.pathnet_config(), seed,
                      checkpoint_path=config.path_checkpoint, log=print)
        print(f"saved {config.path_checkpoint}")
    else:
        train_posenet(samples, config.posenet_config(), seed,
                      checkpoint_path=config.pose_checkpoint, log=print)
        print(f"saved {config.pose_checkpoint}")
    return 0


def _pick_sequence(samples, name: Optional[str]):
    from .scenegen.dataset import _dir_name

    if name is None:
        return samples[0]
    for s in samples:
        if _dir_name(s) == name:
            return s
    raise DataError(f"sequence {name!r} not found")


def _cmd_predict(args) -> int:
    config = _load_run(args.config)
    samples = _load_split(config, "test")
    sample = _pick_sequence(samples, args.sequence)
    models = load_models(config)
    bundle = run_pipeline(config, sample, models)
    print(f"sequence scene{bundle.scene_id:03d}_seq{bundle.actor_id:03d} "
          f"mode={bundle.mode} rollouts={len(bundle.rollouts)}")
    for i, r in enumerate(bundle.rollouts):
        goal = ("-" if r.goal2d is None
                else f"({r.goal2d[0]:.1f}, {r.goal2d[1]:.1f})")
        end = r.path3d[-1]
        print(f"rollout {i}: goal {goal} px, final torso "
              f"({end[0]:.3f}, {end[1]:.3f}, {end[2]:.3f}) m")
    return 0


def _evaluate_split(config: PipelineConfig, split: str):
    samples = _load_split(config, split)
    models = load_models(config)
    bundles = [run_pipeline(config, s, models) for s in samples]
    truths = [truth_from_sample(s, config.n_history, config.torso_joint)
              for s in samples]
    if config.mode == "deterministic":
        preds = [bundle_predictions(b)[0] for b in bundles]
        return evaluate_deterministic(preds, truths, fps=config.fps)
    return best_of_k([bundle_predictions(b) for b in bundles], truths,
                     fps=config.fps)


def _cmd_evaluate(args) -> int:
    config = _load_run(args.config)
    report = _evaluate_split(config, args.split)
    print(format_report(report))
    if args.curves:
        with open(args.curves, "w") as fh:
            fh.write(error_curves([report]))
        print(f"wrote {args.curves}")
    return 0


def _cmd_visualize(args) -> int:
    config = _load_run(args.config)
    samples = _load_split(config, "test")
    sample = _pick_sequence(samples, args.sequence)
    models = load_models(config)
    bundle = run_pipeline(config, sample, models)
    truth = truth_from_sample(sample, config.n_history, config.torso_joint)
    preds = bundle_predictions(bundle)
    if config.mode == "deterministic":
        report = evaluate_deterministic(preds[:1], [truth], fps=config.fps)
    else:
        report = best_of_k([preds], [truth], fps=config.fps)
    written = visualize(bundle, sample, args.out,
                        torso_joint=config.torso_joint,
                        curves_text=error_curves([report]))
    for name in sorted(written):
        print(f"wrote {written[name]}")
    return 0


def main(argv: Optional[List[str]] = None) -> int:
    if os.environ.get("SCENEMOTION_DETERMINISTIC", "0") not in ("", "0"):
        torch.use_deterministic_algorithms(True)
    args = _build_parser().parse_args(argv)
    handlers = {
        "generate-data": _cmd_generate,
        "train": _cmd_train,
        "predict": _cmd_predict,
        "evaluate": _cmd_evaluate,
        "visualize": _cmd_visualize,
    }
    try:
        return handlers[args.command](args)
    except SceneMotionError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
