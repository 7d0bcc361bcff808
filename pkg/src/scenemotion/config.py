"""Run configuration: one INI file drives every stage and the pipeline.

The file has five sections. [data] and [pipeline] hold the shared settings
(dataset location, horizon, mode, seed); [goalnet], [pathnet] and [posenet]
hold the per-stage hyper-parameters. Every constant a stage exposes in its
config dataclass appears here under its own key, so a run is reproducible
from the INI file alone.
"""

import configparser
import dataclasses
import os
from dataclasses import dataclass, field
from typing import Dict, Tuple

from .errors import ConfigError
from .goalnet import GoalNetConfig
from .pathnet import PathNetConfig
from .posenet import PoseNetConfig

MODES = ("deterministic", "stochastic")


@dataclass
class PipelineConfig:
    """Everything needed to train, predict and evaluate one run."""

    dataset_dir: str = "data"
    goal_checkpoint: str = "checkpoints/goalnet.pt"
    path_checkpoint: str = "checkpoints/pathnet.pt"
    pose_checkpoint: str = "checkpoints/posenet.pt"
    mode: str = "deterministic"
    k: int = 10
    seed: int = 0
    n_history: int = 10
    n_future: int = 20
    fps: float = 10.0
    image_size: Tuple[int, int] = (256, 448)  # (height, width)
    joint_count: int = 21
    torso_joint: int = 4
    channel_scale: float = 1.0
    goalnet: Dict[str, object] = field(default_factory=dict)
    pathnet: Dict[str, object] = field(default_factory=dict)
    posenet: Dict[str, object] = field(default_factory=dict)

    def __post_init__(self):
        if self.mode not in MODES:
            raise ConfigError(
                f"mode must be one of {'/'.join(MODES)}, got {self.mode!r}")
        if self.k < 1:
            raise ConfigError(f"k must be >= 1, got {self.k}")
        if self.mode == "stochastic" and not self.goal_checkpoint:
            raise ConfigError("stochastic mode requires a goal checkpoint")
        if self.n_history < 1 or self.n_future < 1:
            raise ConfigError("n_history and n_future must be >= 1")
        if self.fps <= 0:
            raise ConfigError(f"fps must be positive, got {self.fps}")
        if self.channel_scale <= 0:
            raise ConfigError("channel_scale must be positive")
        self.image_size = (int(self.image_size[0]), int(self.image_size[1]))

    # The stage dataclasses own their structural validation; these builders
    # just inject the shared fields and the per-stage overrides.

    def goalnet_config(self) -> GoalNetConfig:
        kwargs = dict(
            n_history=self.n_history,
            joint_count=self.joint_count,
            image_size=self.image_size,
            channel_scale=self.channel_scale,
        )
        kwargs.update(self.goalnet)
        return _build_stage(GoalNetConfig, "goalnet", kwargs)

    def pathnet_config(self) -> PathNetConfig:
        kwargs = dict(
            n_history=self.n_history,
            n_future=self.n_future,
            joint_count=self.joint_count,
            torso_joint=self.torso_joint,
            image_size=self.image_size,
            channel_scale=self.channel_scale,
        )
        kwargs.update(self.pathnet)
        return _build_stage(PathNetConfig, "pathnet", kwargs)

    def posenet_config(self) -> PoseNetConfig:
        kwargs = dict(
            n_history=self.n_history,
            n_future=self.n_future,
            joint_count=self.joint_count,
            torso_joint=self.torso_joint,
        )
        kwargs.update(self.posenet)
        return _build_stage(PoseNetConfig, "posenet", kwargs)


def _build_stage(cls, section: str, kwargs: Dict[str, object]):
    names = {f.name for f in dataclasses.fields(cls)}
    for key in kwargs:
        if key not in names:
            raise ConfigError(f"[{section}] unknown key {key!r}")
    try:
        return cls(**kwargs)
    except ValueError as exc:
        raise ConfigError(f"[{section}] {exc}") from exc


_STAGE_CLASSES = {
    "goalnet": GoalNetConfig,
    "pathnet": PathNetConfig,
    "posenet": PoseNetConfig,
}

# Keys the stage sections must not set; they come from [data] / [pipeline].
_SHARED_KEYS = {"n_history", "n_future", "joint_count", "torso_joint",
                "image_size", "channel_scale"}

_DATA_KEYS = ("dataset_dir", "n_history", "n_future", "fps", "joint_count",
              "torso_joint", "image_height", "image_width")
_PIPELINE_KEYS = ("mode", "k", "seed", "channel_scale", "goal_checkpoint",
                  "path_checkpoint", "pose_checkpoint")


def _parse_scalar(section: str, key: str, raw: str, kind):
    raw = raw.strip()
    try:
        if kind is bool:
            lowered = raw.lower()
            if lowered in ("true", "1", "yes", "on"):
                return True
            if lowered in ("false", "0", "no", "off"):
                return False
            raise ValueError(f"not a boolean: {raw!r}")
        return kind(raw)
    except ValueError as exc:
        raise ConfigError(f"[{section}] {key}: {exc}") from exc


def _stage_overrides(section: str, items: Dict[str, str]) -> Dict[str, object]:
    cls = _STAGE_CLASSES[section]
    types = {f.name: f.type for f in dataclasses.fields(cls)}
    defaults = {f.name: f.default for f in dataclasses.fields(cls)}
    out: Dict[str, object] = {}
    for key, raw in items.items():
        if key in _SHARED_KEYS:
            raise ConfigError(
                f"[{section}] {key} is shared; set it under [data] or [pipeline]")
        if key not in types:
            raise ConfigError(f"[{section}] unknown key {key!r}")
        default = defaults[key]
        kind = type(default)
        value = _parse_scalar(section, key, raw, kind)
        # Values matching the stage default are not overrides; dropping them
        # keeps configs canonical, so INI round trips compare equal.
        if value != default:
            out[key] = value
    return out


def load_config(path: str) -> PipelineConfig:
    """Parse an INI run file. Unknown sections or keys are errors."""
    if not os.path.exists(path):
        raise ConfigError(f"config file missing: {path}")
    parser = configparser.ConfigParser(interpolation=None)
    try:
        parser.read(path)
    except configparser.Error as exc:
        raise ConfigError(f"{path}: {exc}") from exc

    for section in parser.sections():
        if section not in ("data", "pipeline", "goalnet", "pathnet", "posenet"):
            raise ConfigError(f"unknown section [{section}]")

    kwargs: Dict[str, object] = {}
    if parser.has_section("data"):
        items = dict(parser.items("data"))
        for key in items:
            if key not in _DATA_KEYS:
                raise ConfigError(f"[data] unknown key {key!r}")
        if "dataset_dir" in items:
            kwargs["dataset_dir"] = items["dataset_dir"].strip()
        for key, kind in (("n_history", int), ("n_future", int),
                          ("fps", float), ("joint_count", int),
                          ("torso_joint", int)):
            if key in items:
                kwargs[key] = _parse_scalar("data", key, items[key], kind)
        if ("image_height" in items) != ("image_width" in items):
            raise ConfigError(
                "[data] image_height and image_width must be set together")
        if "image_height" in items:
            kwargs["image_size"] = (
                _parse_scalar("data", "image_height", items["image_height"], int),
                _parse_scalar("data", "image_width", items["image_width"], int))

    if parser.has_section("pipeline"):
        items = dict(parser.items("pipeline"))
        for key in items:
            if key not in _PIPELINE_KEYS:
                raise ConfigError(f"[pipeline] unknown key {key!r}")
        for key in ("mode", "goal_checkpoint", "path_checkpoint",
                    "pose_checkpoint"):
            if key in items:
                kwargs[key] = items[key].strip()
        for key, kind in (("k", int), ("seed", int), ("channel_scale", float)):
            if key in items:
                kwargs[key] = _parse_scalar("pipeline", key, items[key], kind)

    for section in ("goalnet", "pathnet", "posenet"):
        if parser.has_section(section):
            kwargs[section] = _stage_overrides(
                section, dict(parser.items(section)))

    config = PipelineConfig(**kwargs)
    # Materialize stage configs now so bad per-stage keys fail at load time.
    config.goalnet_config()
    config.pathnet_config()
    config.posenet_config()
    return config


def config_to_ini(config: PipelineConfig) -> str:
    """Render a config back to INI text, all keys explicit."""
    goal = config.goalnet_config()
    path = config.pathnet_config()
    pose = config.posenet_config()
    lines = [
        "[data]",
        f"dataset_dir = {config.dataset_dir}",
        f"n_history = {config.n_history}",
        f"n_future = {config.n_future}",
        f"fps = {config.fps:g}",
        f"joint_count = {config.joint_count}",
        f"torso_joint = {config.torso_joint}",
        f"image_height = {config.image_size[0]}",
        f"image_width = {config.image_size[1]}",
        "",
        "[pipeline]",
        f"mode = {config.mode}",
        f"k = {config.k}",
        f"seed = {config.seed}",
        f"channel_scale = {config.channel_scale:g}",
        f"goal_checkpoint = {config.goal_checkpoint}",
        f"path_checkpoint = {config.path_checkpoint}",
        f"pose_checkpoint = {config.pose_checkpoint}",
        "",
    ]
    for section, cfg in (("goalnet", goal), ("pathnet", path),
                         ("posenet", pose)):
        lines.append(f"[{section}]")
        for f in dataclasses.fields(cfg):
            if f.name in _SHARED_KEYS:
                continue
            value = getattr(cfg, f.name)
            if isinstance(value, bool):
                value = "true" if value else "false"
            elif isinstance(value, float):
                value = f"{value:g}"
            lines.append(f"{f.name} = {value}")
        lines.append("")
    return "\n".join(lines)


def save_config(config: PipelineConfig, path: str) -> None:
    with open(path, "w") as fh:
        fh.write(config_to_ini(config))


def check_manifest_consistency(config: PipelineConfig,
                               manifest: Dict[str, str]) -> None:
    """Dataset manifest and run config must agree on the shared geometry."""
    checks = (
        ("n_history", config.n_history, int),
        ("n_future", config.n_future, int),
        ("fps", config.fps, float),
        ("joints", config.joint_count, int),
        ("torso_index", config.torso_joint, int),
        ("image_height", config.image_size[0], int),
        ("image_width", config.image_size[1], int),
    )
    for key, expected, kind in checks:
        actual = kind(manifest[key])
        if actual != kind(expected):
            raise ConfigError(
                f"config/{key} is {expected} but dataset manifest says {actual}")
