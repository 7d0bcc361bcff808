"""Goal-conditioned 3D path planner over scene context.

Inputs at image resolution: the scene image (3 channels), one Gaussian
heatmap per history frame and joint (N*J channels), and a single goal
channel (all zeros in deterministic mode). A strided stem brings the stack
to quarter resolution, three hourglass stacks refine shared features, and
two heads read every stack: a convolutional head emitting one future-frame
torso heatmap per output frame, and a linear branch that fuses pooled trunk
features with the history coordinates and the bounding-box depth estimates
to regress normalized per-frame depths for history and future together.

The 3D path is the pinhole back-projection of the 2D path with those
depths; history 2D coordinates come from the observed input, future ones
from the soft-argmax of the predicted heatmaps. Training supervises every
stack (coordinate L1 on future 2D, L1 on the back-projected 3D path plus a
consecutive-frame smoothness penalty); inference reads the final stack
only. An optional linear head on the fused vector regresses (N+T)x3
coordinates directly instead, trading the heatmap+depth representation for
plain regression (kept for comparison runs).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, List, Optional, Tuple

import numpy as np
import torch
import torch.nn as nn

from .geometry import (
    DEPTH_SCALE,
    CameraModel,
    render_heatmap_stack,
    heatmap_expectation,
    soft_argmax,
)
from .goalnet import HEATMAP_STRIDE, image_tensor
from .netblocks import (
    ConvBlock,
    ConvBNRelu,
    HourglassStack,
    LinearBlock,
    global_avg_pool,
    hourglass_channels,
    init_weights,
    save_checkpoint,
    scaled,
)

MIN_DEPTH_M = 0.05  # floor for emitted depths; training sees raw values


@dataclass
class PathNetConfig:
    n_history: int = 10
    n_future: int = 20
    joint_count: int = 21
    torso_joint: int = 4  # index of the trajectory joint within the J axis
    image_size: Tuple[int, int] = (256, 448)  # (height, width)
    channel_scale: float = 1.0
    stacks: int = 3
    input_sigma: float = 8.0  # px, for the image-resolution input channels
    person_height_m: float = 1.7
    goal_dropout: float = 0.25
    regress_xyz: bool = False
    learning_rate: float = 2.5e-4
    weight_decay: float = 1e-4
    epochs: int = 10
    batch_size: int = 32
    lr_decay: float = 0.1  # applied once at 70% of the epochs

    def __post_init__(self):
        h, w = self.image_size
        # stem + first block halve twice, the hourglass needs two more
        if h % 16 or w % 16:
            raise ValueError("image dims must be divisible by 16")
        if self.n_history < 1 or self.n_future < 1 or self.joint_count < 1:
            raise ValueError("n_history, n_future, joint_count must be >= 1")
        if not 0 <= self.torso_joint < self.joint_count:
            raise ValueError("torso_joint out of range")
        if self.stacks < 1:
            raise ValueError("stacks must be >= 1")
        if not 0.0 <= self.goal_dropout < 1.0:
            raise ValueError("goal_dropout must be in [0, 1)")

    @property
    def grid_size(self) -> Tuple[int, int]:
        return (self.image_size[0] // HEATMAP_STRIDE,
                self.image_size[1] // HEATMAP_STRIDE)

    @property
    def total_frames(self) -> int:
        return self.n_history + self.n_future


@dataclass
class PathNetInput:
    """One sequence worth of planner inputs, image resolution throughout."""

    image: torch.Tensor  # [3, H, W] float in [0, 1]
    history_heatmaps: torch.Tensor  # [N*J, H, W]
    goal_heatmap: torch.Tensor  # [1, H, W]; all zeros when no goal is given
    initial_depths: torch.Tensor  # [N] meters, > 0, from bounding-box scale
    history_coords: torch.Tensor  # [N, J, 2] image px
    camera: CameraModel


@dataclass
class PathPrediction:
    """Final-stack decoded path for one sequence.

    heatmaps stores per-future-frame softmax probability grids; coords2d is
    the probability-weighted coordinate expectation of exactly those grids.
    path3d is the pinhole back-projection of (history coords + coords2d)
    with the predicted depths, so the geometric consistency is structural.
    """

    heatmaps: np.ndarray  # [T, gh, gw] probability grids, stride 4
    coords2d: np.ndarray  # [T, 2] image px
    depths: np.ndarray  # [N+T] meters, >= MIN_DEPTH_M
    path3d: np.ndarray  # [N+T, 3] meters, camera frame


class PathNet(nn.Module):
    """Hourglass path planner. See module docstring for dataflow."""

    def __init__(self, config: PathNetConfig):
        super().__init__()
        self.config = config
        cs = config.channel_scale
        n, j, t = config.n_history, config.joint_count, config.n_future
        in_ch = 3 + n * j + 1
        c128, c256 = scaled(128, cs), scaled(256, cs)
        c384, c512 = scaled(384, cs), scaled(512, cs)
        self.conv6 = ConvBNRelu(in_ch, c128, 7, stride=2)
        self.block7 = ConvBlock(c128, c256, stride=2)
        self.stacks = nn.ModuleList(
            HourglassStack(hourglass_channels(cs)) for _ in range(config.stacks))
        # heads are shared across stacks
        self.hm_block11 = ConvBlock(c256, c256)
        self.hm_head12 = nn.Conv2d(c256, t, 1)
        self.d_block13 = ConvBlock(c256, c384, stride=2)
        self.d_block14 = ConvBlock(c384, c512, stride=2)
        self.lin16 = LinearBlock(n + n * j * 2, c256)
        self.lin17 = LinearBlock(c512 + c256, c256)
        self.depth_head18 = nn.Linear(c256, n + t)
        if config.regress_xyz:
            self.xyz_head = nn.Linear(c256, (n + t) * 3)
        init_weights(self)
        # depths are trained as meters / DEPTH_SCALE; bias 1 starts near 4 m
        nn.init.constant_(self.depth_head18.bias, 1.0)

    def forward(self, image: torch.Tensor, history_heatmaps: torch.Tensor,
                goal_heatmap: torch.Tensor, aux: torch.Tensor,
                collect: Optional[Dict[str, torch.Tensor]] = None,
                ) -> List[Dict[str, torch.Tensor]]:
        """Batched forward. Returns one output dict per stack.

        aux is the flattened (initial depths / DEPTH_SCALE, history coords
        normalized by image width/height) vector, [B, N + N*J*2].
        """
        x = torch.cat([image, history_heatmaps, goal_heatmap], dim=1)
        t6 = self.conv6(x)
        t7 = self.block7(t6)
        a16 = self.lin16(aux)
        outputs = []
        feat = t7
        for stack in self.stacks:
            feat = stack(feat)
            hm_b = self.hm_block11(feat)
            hm = self.hm_head12(hm_b)
            d13 = self.d_block13(feat)
            d14 = self.d_block14(d13)
            d15 = global_avg_pool(d14)
            d17 = self.lin17(torch.cat([d15, a16], dim=1))
            out = {"heatmaps": hm, "depths": self.depth_head18(d17)}
            if self.config.regress_xyz:
                b = d17.shape[0]
                out["xyz"] = self.xyz_head(d17).reshape(
                    b, self.config.total_frames, 3)
            outputs.append(out)
        if collect is not None:
            last = outputs[-1]
            collect.update({
                "1": x, "6": t6, "7": t7, "11": hm_b,
                "12": last["heatmaps"], "13": d13, "14": d14, "15": d15,
                "16": a16, "17": d17, "18": last["depths"],
            })
            for i, out in enumerate(outputs):
                collect[f"stack{i + 1}"] = out["heatmaps"]
        return outputs


def _check_input(config: PathNetConfig, inp: PathNetInput) -> None:
    h, w = config.image_size
    n, j = config.n_history, config.joint_count
    expect = {
        "image": (3, h, w),
        "history_heatmaps": (n * j, h, w),
        "goal_heatmap": (1, h, w),
        "initial_depths": (n,),
        "history_coords": (n, j, 2),
    }
    for name, shape in expect.items():
        got = tuple(getattr(inp, name).shape)
        if got != shape:
            raise ValueError(f"{name} shape {got}, expected {shape}")
    if (inp.initial_depths <= 0).any():
        raise ValueError("initial_depths must be positive")


def aux_vector(config: PathNetConfig, initial_depths: torch.Tensor,
               history_coords: torch.Tensor) -> torch.Tensor:
    """Normalize and flatten the two non-image inputs into one vector."""
    h, w = config.image_size
    scale = torch.tensor([float(w), float(h)], dtype=history_coords.dtype)
    return torch.cat([initial_depths / DEPTH_SCALE,
                      (history_coords / scale).reshape(-1)])


def predict_path(model: PathNet, inp: PathNetInput,
                 mode: str = "goal-conditioned") -> PathPrediction:
    """Single-sequence inference from the final stack."""
    if mode not in ("goal-conditioned", "deterministic"):
        raise ValueError(f"unknown mode {mode!r}")
    cfg = model.config
    _check_input(cfg, inp)
    goal = inp.goal_heatmap if mode == "goal-conditioned" \
        else torch.zeros_like(inp.goal_heatmap)
    aux = aux_vector(cfg, inp.initial_depths, inp.history_coords)
    was_training = model.training
    model.eval()
    with torch.no_grad():
        outs = model(inp.image[None], inp.history_heatmaps[None],
                     goal[None], aux[None])
    if was_training:
        model.train()
    final = outs[-1]
    logits = final["heatmaps"][0]  # [T, gh, gw]
    flat = torch.softmax(logits.reshape(cfg.n_future, -1), dim=-1)
    probs = flat.reshape_as(logits).numpy()
    coords2d = np.stack([
        heatmap_expectation(probs[t], stride=float(HEATMAP_STRIDE))
        for t in range(cfg.n_future)
    ]).astype(np.float64)
    depths = final["depths"][0].numpy().astype(np.float64) * DEPTH_SCALE
    depths = np.maximum(depths, MIN_DEPTH_M)
    history2d = inp.history_coords[:, cfg.torso_joint].numpy().astype(np.float64)
    path2d = np.concatenate([history2d, coords2d], axis=0)
    path3d = inp.camera.back_project(path2d, depths)
    return PathPrediction(heatmaps=probs, coords2d=coords2d, depths=depths,
                          path3d=path3d)


def regress_xyz_ablation(model: PathNet, inp: PathNetInput,
                         mode: str = "goal-conditioned") -> np.ndarray:
    """Direct (N+T)x3 coordinate regression from the fused vector."""
    if not model.config.regress_xyz:
        raise ValueError("model was built without the xyz head")
    if mode not in ("goal-conditioned", "deterministic"):
        raise ValueError(f"unknown mode {mode!r}")
    cfg = model.config
    _check_input(cfg, inp)
    goal = inp.goal_heatmap if mode == "goal-conditioned" \
        else torch.zeros_like(inp.goal_heatmap)
    aux = aux_vector(cfg, inp.initial_depths, inp.history_coords)
    was_training = model.training
    model.eval()
    with torch.no_grad():
        outs = model(inp.image[None], inp.history_heatmaps[None],
                     goal[None], aux[None])
    if was_training:
        model.train()
    return outs[-1]["xyz"][0].numpy().astype(np.float64) * DEPTH_SCALE


def path_loss(pred, gt_coords2d, gt_path3d) -> Tuple[torch.Tensor, torch.Tensor]:
    """(L over future 2D coords, L over the full 3D path).

    pred is a PathPrediction or a (coords2d, path3d) tensor pair, batched or
    not; coords2d None skips the 2D term (direct-regression variant). Both
    terms are L1 summed over coordinate axes and averaged over frames (and
    batch); the 3D term adds the consecutive-frame smoothness penalty on the
    predicted path, which is zero only for constant paths.
    """
    if isinstance(pred, PathPrediction):
        coords = torch.as_tensor(pred.coords2d, dtype=torch.float64)
        path3d = torch.as_tensor(pred.path3d, dtype=torch.float64)
    else:
        coords, path3d = pred
    gt3 = torch.as_tensor(gt_path3d, dtype=path3d.dtype)
    if coords is None:
        l_2d = torch.zeros((), dtype=path3d.dtype)
    else:
        gt2 = torch.as_tensor(gt_coords2d, dtype=coords.dtype)
        l_2d = (gt2 - coords).abs().sum(dim=-1).mean()
    err3d = (gt3 - path3d).abs().sum(dim=-1).mean()
    steps = path3d[..., 1:, :] - path3d[..., :-1, :]
    smooth = steps.abs().sum(dim=-1).mean()
    return l_2d, err3d + smooth


def pose_bounding_boxes(poses2d: np.ndarray) -> np.ndarray:
    """[F, J, 2] joints -> [F, 4] boxes as (u_min, v_min, u_max, v_max)."""
    lo = poses2d.min(axis=1)
    hi = poses2d.max(axis=1)
    return np.concatenate([lo, hi], axis=1)


def initial_depth_estimate(history_boxes: np.ndarray, focal_y: float,
                           person_height_m: float = 1.7) -> np.ndarray:
    """Depth from apparent size: focal_y * person_height_m / box height."""
    boxes = np.asarray(history_boxes, dtype=np.float64)
    if boxes.ndim != 2 or boxes.shape[1] != 4:
        raise ValueError("history_boxes must be [N, 4]")
    heights = boxes[:, 3] - boxes[:, 1]
    if np.any(heights <= 1e-9):
        raise ValueError("degenerate bounding box (height <= 0)")
    return focal_y * person_height_m / heights


def build_path_input(image_u8: np.ndarray, history2d: np.ndarray,
                     camera: CameraModel, config: PathNetConfig,
                     goal_destination: Optional[np.ndarray] = None,
                     ) -> PathNetInput:
    """Assemble PathNetInput from raw pieces; goal None leaves the channel zero."""
    h, w = config.image_size
    if image_u8.shape[:2] != (h, w):
        raise ValueError(f"image is {image_u8.shape[:2]}, config wants {(h, w)}")
    n, j = config.n_history, config.joint_count
    history2d = np.asarray(history2d, dtype=np.float64)
    if history2d.shape != (n, j, 2):
        raise ValueError(f"history2d must be [{n}, {j}, 2]")
    hms = render_heatmap_stack(history2d.reshape(n * j, 2),
                               config.input_sigma, (h, w), stride=1.0)
    if goal_destination is None:
        goal = torch.zeros(1, h, w)
    else:
        dest = np.asarray(goal_destination, dtype=np.float64)
        goal = torch.from_numpy(render_heatmap_stack(
            dest[None], config.input_sigma, (h, w), stride=1.0))
    depths = initial_depth_estimate(pose_bounding_boxes(history2d),
                                    camera.fy, config.person_height_m)
    return PathNetInput(
        image=image_tensor(image_u8),
        history_heatmaps=torch.from_numpy(hms),
        goal_heatmap=goal,
        initial_depths=torch.from_numpy(depths.astype(np.float32)),
        history_coords=torch.from_numpy(history2d.astype(np.float32)),
        camera=camera,
    )


def _back_project_batch(path2d: torch.Tensor, depths: torch.Tensor,
                        cams: torch.Tensor) -> torch.Tensor:
    """Pinhole back-projection without positivity checks, for training.

    path2d [B, F, 2], depths [B, F] (raw meters), cams [B, 4] as
    (fx, fy, cx, cy) -> [B, F, 3].
    """
    fx, fy = cams[:, 0:1], cams[:, 1:2]
    cx, cy = cams[:, 2:3], cams[:, 3:4]
    x = (path2d[..., 0] - cx) * depths / fx
    y = (path2d[..., 1] - cy) * depths / fy
    return torch.stack([x, y, depths], dim=-1)


def prepare_path_sample(sample, config: PathNetConfig):
    """SceneSample-like -> cached training tensors for one sequence."""
    n, t, tj = config.n_history, config.n_future, config.torso_joint
    poses2d = np.asarray(sample.poses2d.values, dtype=np.float64)
    poses3d = np.asarray(sample.poses3d.values, dtype=np.float64)
    if poses2d.shape[0] < n + t:
        raise ValueError(f"sequence shorter than {n + t} frames")
    inp = build_path_input(sample.image, poses2d[:n], sample.camera, config,
                           goal_destination=sample.destination2d)
    cam = sample.camera
    return {
        "image": inp.image,
        "heatmaps": inp.history_heatmaps.half(),
        "goal": inp.goal_heatmap.half(),
        "aux": aux_vector(config, inp.initial_depths, inp.history_coords),
        "hist_torso": torch.from_numpy(
            poses2d[:n, tj].astype(np.float32)),
        "gt2d": torch.from_numpy(poses2d[n:n + t, tj].astype(np.float32)),
        "gt3d": torch.from_numpy(poses3d[:n + t, tj].astype(np.float32)),
        "cam": torch.tensor([cam.fx, cam.fy, cam.cx, cam.cy],
                            dtype=torch.float32),
    }


def train_pathnet(samples, config: PathNetConfig, seed: int,
                  checkpoint_path: Optional[str] = None,
                  log=None) -> dict:
    """Teacher-forced training (ground-truth goal channel, random goal
    dropout); deep supervision over all stacks. Returns model + history."""
    torch.manual_seed(seed)
    model = PathNet(config)
    opt = torch.optim.Adam(model.parameters(), lr=config.learning_rate,
                           weight_decay=config.weight_decay)
    milestone = max(1, int(round(0.7 * config.epochs)))
    sched = torch.optim.lr_scheduler.MultiStepLR(
        opt, milestones=[milestone], gamma=config.lr_decay)

    # input heatmap stacks dominate memory, so they are cached in half
    # precision and widened per batch
    cached = [prepare_path_sample(s, config) for s in samples]
    images = torch.stack([c["image"] for c in cached])
    heatmaps = torch.stack([c["heatmaps"] for c in cached])
    goals = torch.stack([c["goal"] for c in cached])
    auxes = torch.stack([c["aux"] for c in cached])
    hist_torso = torch.stack([c["hist_torso"] for c in cached])
    gt2d = torch.stack([c["gt2d"] for c in cached])
    gt3d = torch.stack([c["gt3d"] for c in cached])
    cams = torch.stack([c["cam"] for c in cached])

    m = len(samples)
    batch = min(config.batch_size, m)
    gen = torch.Generator().manual_seed(seed)
    model.train()
    history = {"loss": [], "l2d": [], "l3d": []}
    for epoch in range(config.epochs):
        perm = torch.randperm(m, generator=gen)
        for start in range(0, m, batch):
            idx = perm[start:start + batch]
            goal = goals[idx].float()
            if config.goal_dropout > 0:
                drop = torch.rand(len(idx), generator=gen) < config.goal_dropout
                goal[drop] = 0.0
            outs = model(images[idx], heatmaps[idx].float(), goal, auxes[idx])
            total = 0.0
            l2d_last = l3d_last = None
            for out in outs:
                if config.regress_xyz:
                    pred3d = out["xyz"] * DEPTH_SCALE
                    l2d, l3d = path_loss((None, pred3d), gt2d[idx], gt3d[idx])
                else:
                    coords = soft_argmax(out["heatmaps"], temperature=1.0,
                                         stride=float(HEATMAP_STRIDE))
                    depths_m = out["depths"] * DEPTH_SCALE
                    path2d = torch.cat([hist_torso[idx], coords], dim=1)
                    pred3d = _back_project_batch(path2d, depths_m, cams[idx])
                    l2d, l3d = path_loss((coords, pred3d), gt2d[idx], gt3d[idx])
                total = total + l2d + l3d
                l2d_last, l3d_last = l2d, l3d
            total = total / len(outs)
            opt.zero_grad()
            total.backward()
            opt.step()
            history["loss"].append(total.item())
            history["l2d"].append(l2d_last.item())
            history["l3d"].append(l3d_last.item())
        sched.step()
        if log is not None:
            log(f"pathnet epoch {epoch + 1}/{config.epochs} "
                f"l2d {history['l2d'][-1]:.3f} l3d {history['l3d'][-1]:.3f}")
    if checkpoint_path is not None:
        meta = {"stage": "pathnet", "seed": seed, "config": vars(config).copy()}
        meta["config"]["image_size"] = tuple(config.image_size)
        save_checkpoint(checkpoint_path, model, meta)
    return {"model": model, "history": history}


def pathnet_from_checkpoint(path: str) -> PathNet:
    from .netblocks import load_checkpoint

    meta = load_checkpoint(path)
    cfg_dict = dict(meta.get("config", {}))
    cfg_dict["image_size"] = tuple(cfg_dict.get("image_size", (256, 448)))
    config = PathNetConfig(**cfg_dict)
    model = PathNet(config)
    load_checkpoint(path, model)
    return model
