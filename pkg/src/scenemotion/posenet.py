"""Attention-based refiner of coarse 3D pose sequences.

The initial estimate lifts the 2D pose history into 3D by back-projecting
every joint with its frame's torso depth taken from the path, then carries
the present (last observed) pose to every future frame by translating it
along the path. The refiner is an encoder-decoder over per-frame tokens:
each token is the flattened 3J pose vector fed to attention directly, with
no input embedding, no positional encoding, and no output softmax; temporal
order is carried by the translation trend in the tokens themselves. The
decoder queries are the future tokens, the final linear layer starts at
zero, so at initialization the network is the identity on its future input.

Training uses the ground-truth 3D path to build the initial estimate;
inference consumes the planner's predicted path.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F

from .geometry import (
    CameraModel,
    DepthSequence,
    PoseSequence2D,
    PoseSequence3D,
    lift_pose_sequence,
)
from .netblocks import save_checkpoint


@dataclass
class PoseNetConfig:
    joint_count: int = 21
    torso_joint: int = 4
    n_history: int = 10
    n_future: int = 20
    heads: int = 3
    encoder_layers: int = 2
    decoder_layers: int = 2
    attention_dropout: float = 0.2
    learning_rate: float = 1e-3
    weight_decay: float = 0.0
    epochs: int = 80
    batch_size: int = 1024
    warmup_steps: int = 50  # linear lr ramp before the cosine decay

    def __post_init__(self):
        if self.joint_count < 1:
            raise ValueError("joint_count must be >= 1")
        if self.model_dim % self.heads:
            raise ValueError(
                f"model_dim {self.model_dim} not divisible by {self.heads} heads")
        if not 0 <= self.torso_joint < self.joint_count:
            raise ValueError("torso_joint out of range")
        if self.n_history < 1 or self.n_future < 1:
            raise ValueError("n_history and n_future must be >= 1")

    @property
    def model_dim(self) -> int:
        # tokens are raw flattened poses, so the width is pinned to 3J
        return 3 * self.joint_count

    @property
    def total_frames(self) -> int:
        return self.n_history + self.n_future


@dataclass
class InitialEstimate:
    """Coarse 3D pose sequence over all N+T frames plus its source path.

    Frames up to N are the lifted history; every later frame is the frame-N
    pose translated rigidly along the path, so its root-relative pose equals
    the present one by construction.
    """

    poses: PoseSequence3D
    source_path: np.ndarray  # [N+T, 3] meters


def build_initial_estimate(history2d: PoseSequence2D, path3d: np.ndarray,
                           camera: CameraModel) -> InitialEstimate:
    """Lift history with path depths, replicate the present pose forward."""
    path3d = np.asarray(path3d, dtype=np.float64)
    if path3d.ndim != 2 or path3d.shape[1] != 3:
        raise ValueError("path3d must be [N+T, 3]")
    n = history2d.frames
    total = path3d.shape[0]
    if total <= n:
        raise ValueError(
            f"path has {total} frames, needs more than the {n} history frames")
    if np.any(path3d[:, 2] <= 0):
        raise ValueError("path depths must be positive")
    lifted = lift_pose_sequence(camera, history2d,
                                DepthSequence(values=path3d[:n, 2]))
    present = lifted.values[n - 1]
    future = present[None, :, :] + (path3d[n:] - path3d[n - 1])[:, None, :]
    values = np.concatenate([lifted.values, future], axis=0)
    return InitialEstimate(
        poses=PoseSequence3D(values=values, frame_rate=history2d.frame_rate),
        source_path=path3d,
    )


class _EncoderLayer(nn.Module):
    def __init__(self, dim: int, heads: int, dropout: float):
        super().__init__()
        self.attn = nn.MultiheadAttention(dim, heads, dropout=dropout,
                                          batch_first=True)
        self.ffn = nn.Sequential(nn.Linear(dim, 4 * dim), nn.ReLU(),
                                 nn.Linear(4 * dim, dim))
        self.norm1 = nn.LayerNorm(dim)
        self.norm2 = nn.LayerNorm(dim)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        attn, _ = self.attn(x, x, x, need_weights=False)
        x = self.norm1(x + attn)
        return self.norm2(x + self.ffn(x))


class _DecoderLayer(nn.Module):
    def __init__(self, dim: int, heads: int, dropout: float):
        super().__init__()
        self.self_attn = nn.MultiheadAttention(dim, heads, dropout=dropout,
                                               batch_first=True)
        self.cross_attn = nn.MultiheadAttention(dim, heads, dropout=dropout,
                                                batch_first=True)
        self.ffn = nn.Sequential(nn.Linear(dim, 4 * dim), nn.ReLU(),
                                 nn.Linear(4 * dim, dim))
        self.norm1 = nn.LayerNorm(dim)
        self.norm2 = nn.LayerNorm(dim)
        self.norm3 = nn.LayerNorm(dim)

    def forward(self, x: torch.Tensor, memory: torch.Tensor) -> torch.Tensor:
        attn, _ = self.self_attn(x, x, x, need_weights=False)
        x = self.norm1(x + attn)
        attn, _ = self.cross_attn(x, memory, memory, need_weights=False)
        x = self.norm2(x + attn)
        return self.norm3(x + self.ffn(x))


class PoseNet(nn.Module):
    """Encoder over all N+T tokens, decoder over the T future tokens."""

    def __init__(self, config: PoseNetConfig):
        super().__init__()
        self.config = config
        d, h, p = config.model_dim, config.heads, config.attention_dropout
        self.encoder = nn.ModuleList(
            _EncoderLayer(d, h, p) for _ in range(config.encoder_layers))
        self.decoder = nn.ModuleList(
            _DecoderLayer(d, h, p) for _ in range(config.decoder_layers))
        self.out = nn.Linear(d, d)
        # zero output head: the residual makes the fresh network an identity
        nn.init.zeros_(self.out.weight)
        nn.init.zeros_(self.out.bias)

    def forward(self, tokens: torch.Tensor) -> torch.Tensor:
        """[B, N+T, 3J] initial estimate -> [B, T, 3J] refined future.

        Attention runs on tokens centered at the present torso position, so
        the refinement is exactly equivariant to camera-frame translations;
        the residual is added back onto the uncentered future tokens.
        """
        cfg = self.config
        n = cfg.n_history
        b, f, d = tokens.shape
        joints = tokens.reshape(b, f, cfg.joint_count, 3)
        center = joints[:, n - 1, cfg.torso_joint]
        x = (joints - center[:, None, None, :]).reshape(b, f, d)
        memory = x
        for layer in self.encoder:
            memory = layer(memory)
        q = x[:, n:]
        for layer in self.decoder:
            q = layer(q, memory)
        return tokens[:, n:] + self.out(q)


def refine(model: PoseNet, init: InitialEstimate) -> PoseSequence3D:
    """Refined future poses (frames N+1..N+T) for one sequence."""
    cfg = model.config
    values = init.poses.values
    if values.shape[0] != cfg.total_frames:
        raise ValueError(
            f"estimate has {values.shape[0]} frames, config wants {cfg.total_frames}")
    if values.shape[1] != cfg.joint_count:
        raise ValueError("joint count mismatch")
    tokens = torch.from_numpy(
        values.reshape(cfg.total_frames, -1).astype(np.float32))
    was_training = model.training
    model.eval()
    with torch.no_grad():
        out = model(tokens[None])[0]
    if was_training:
        model.train()
    refined = out.numpy().astype(np.float64).reshape(
        cfg.n_future, cfg.joint_count, 3)
    return PoseSequence3D(values=refined, frame_rate=init.poses.frame_rate)


def pose_loss(pred, gt) -> torch.Tensor:
    """L1 summed over the coordinate axis, averaged over joints and frames
    (and batch). pred/gt are [..., J, 3] arrays or tensors."""
    pred_t = pred if torch.is_tensor(pred) else torch.as_tensor(pred)
    gt_t = torch.as_tensor(gt, dtype=pred_t.dtype)
    if pred_t.shape != gt_t.shape:
        raise ValueError(f"shape mismatch {tuple(pred_t.shape)} vs {tuple(gt_t.shape)}")
    return (gt_t - pred_t).abs().sum(dim=-1).mean()


def prepare_pose_tokens(sample, config: PoseNetConfig) -> Tuple[torch.Tensor, torch.Tensor]:
    """SceneSample-like -> (initial tokens [N+T, 3J], gt future [T, J, 3]).

    Teacher forcing: the initial estimate is built from the ground-truth
    torso path taken out of poses3d.
    """
    n, t = config.n_history, config.n_future
    poses2d = np.asarray(sample.poses2d.values, dtype=np.float64)
    poses3d = np.asarray(sample.poses3d.values, dtype=np.float64)
    if poses2d.shape[0] < n + t:
        raise ValueError(f"sequence shorter than {n + t} frames")
    fps = getattr(sample.poses2d, "frame_rate", 10.0)
    history = PoseSequence2D(values=poses2d[:n], frame_rate=fps)
    gt_path = poses3d[:n + t, config.torso_joint]
    init = build_initial_estimate(history, gt_path, sample.camera)
    tokens = torch.from_numpy(
        init.poses.values.reshape(n + t, -1).astype(np.float32))
    gt = torch.from_numpy(poses3d[n:n + t].astype(np.float32))
    return tokens, gt


def train_posenet(samples, config: PoseNetConfig, seed: int,
                  checkpoint_path: Optional[str] = None,
                  log=None) -> dict:
    """Train the refiner on teacher-forced initial estimates."""
    torch.manual_seed(seed)
    model = PoseNet(config)
    # short-memory second moment follows the sign-like L1 gradients faster
    opt = torch.optim.Adam(model.parameters(), lr=config.learning_rate,
                           betas=(0.9, 0.99),
                           weight_decay=config.weight_decay)
    pairs = [prepare_pose_tokens(s, config) for s in samples]
    tokens = torch.stack([p[0] for p in pairs])
    gts = torch.stack([p[1] for p in pairs])

    m = len(samples)
    batch = min(config.batch_size, m)
    steps_per_epoch = (m + batch - 1) // batch
    total_steps = config.epochs * steps_per_epoch
    warmup = max(1, min(config.warmup_steps, total_steps))

    # The L1 objective under Adam oscillates at the step-size scale, so the
    # lr has to land near zero for the loss to settle: linear warmup into a
    # cosine that decays all the way down, stepped per update.
    def _lr_scale(step: int) -> float:
        ramp = min(1.0, (step + 1) / warmup)
        angle = np.pi * min(1.0, step / max(1, total_steps))
        return ramp * 0.5 * (1.0 + float(np.cos(angle)))

    sched = torch.optim.lr_scheduler.LambdaLR(opt, _lr_scale)

    gen = torch.Generator().manual_seed(seed)
    model.train()
    history = {"loss": []}
    for epoch in range(config.epochs):
        perm = torch.randperm(m, generator=gen)
        for start in range(0, m, batch):
            idx = perm[start:start + batch]
            out = model(tokens[idx])
            pred = out.reshape(len(idx), config.n_future,
                               config.joint_count, 3)
            loss = pose_loss(pred, gts[idx])
            opt.zero_grad()
            loss.backward()
            opt.step()
            sched.step()
            history["loss"].append(loss.item())
        if log is not None:
            log(f"posenet epoch {epoch + 1}/{config.epochs} "
                f"loss {history['loss'][-1]:.4f}")
    if checkpoint_path is not None:
        meta = {"stage": "posenet", "seed": seed, "config": vars(config).copy()}
        save_checkpoint(checkpoint_path, model, meta)
    return {"model": model, "history": history}


def posenet_from_checkpoint(path: str) -> PoseNet:
    from .netblocks import load_checkpoint

    meta = load_checkpoint(path)
    config = PoseNetConfig(**dict(meta.get("config", {})))
    model = PoseNet(config)
    load_checkpoint(path, model)
    return model
