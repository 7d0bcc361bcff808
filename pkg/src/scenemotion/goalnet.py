"""Conditional VAE over 2D motion destinations.

Encoder: (history joint heatmaps at grid resolution, scene image) -> Gaussian
latent (Z=30). Decoder: z broadcast over the bottleneck grid, merged with the
encoder feature map, deconvolved up to a single destination heatmap at grid
resolution (stride 4 relative to the image). Training minimizes coordinate L1
on the soft-argmax destination plus the KL divergence to N(0, 1).

The variational posterior optionally also sees the ground-truth destination
heatmap through a small side branch (`destination_posterior`, default on).
Without it, z is conditionally independent of the target given the context, so
the decoder has nothing to gain from z and collapses to one destination per
context; with it, prior samples at test time spread over the plausible modes.
Test-time sampling always draws z from N(0, 1) and never uses the encoder.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Dict, List, Optional, Tuple

import numpy as np
import torch
import torch.nn as nn

from .geometry import Heatmap, heatmap_expectation, render_heatmap_stack, soft_argmax
from .netblocks import (
    ConvBlock,
    ConvBNRelu,
    global_avg_pool,
    init_weights,
    nearest_upsample,
    save_checkpoint,
    scaled,
)

HEATMAP_STRIDE = 4  # image px per heatmap grid cell, fixed by the architecture


@dataclass
class GoalNetConfig:
    n_history: int = 10
    joint_count: int = 21
    image_size: Tuple[int, int] = (256, 448)  # (height, width)
    latent_dim: int = 30
    channel_scale: float = 1.0
    heatmap_sigma: float = 2.0  # grid cells
    destination_posterior: bool = True
    learning_rate: float = 1e-4
    weight_decay: float = 0.0
    epochs: int = 2
    batch_size: int = 128
    kl_weight: float = 1.0

    def __post_init__(self):
        h, w = self.image_size
        if h % 4 or w % 4:
            raise ValueError("image dims must be divisible by 4")
        if self.latent_dim < 1 or self.n_history < 1 or self.joint_count < 1:
            raise ValueError("latent_dim, n_history, joint_count must be >= 1")

    @property
    def grid_size(self) -> Tuple[int, int]:
        return (self.image_size[0] // 4, self.image_size[1] // 4)


@dataclass
class GoalLatent:
    """Gaussian posterior parameters, [batch, Z] each, sigma > 0."""

    mu: torch.Tensor
    sigma: torch.Tensor


@dataclass
class GoalCondition:
    """Encoder trunk features reused by the decoder."""

    feat_map: torch.Tensor  # bottleneck feature map [B, C, h, w]
    feat_vec: torch.Tensor  # pooled vector [B, C]
    skip_sizes: Tuple[Tuple[int, int], ...]  # spatial sizes for decoder upsampling


@dataclass
class GoalSample:
    """One decoded destination hypothesis.

    heatmap stores the softmax probability grid; destination is the
    probability-weighted coordinate expectation of exactly that stored grid
    (cached at construction, asserted never to drift).
    """

    heatmap: Heatmap
    destination: np.ndarray  # (u, v) image pixels
    z_used: np.ndarray


class GoalNet(nn.Module):
    """Destination CVAE. See module docstring for dataflow."""

    def __init__(self, config: GoalNetConfig):
        super().__init__()
        self.config = config
        s = config.channel_scale
        c64, c128 = scaled(64, s), scaled(128, s)
        c256, c512 = scaled(256, s), scaled(512, s)
        self._c512 = c512
        nj = config.n_history * config.joint_count
        z = config.latent_dim

        self.img_stem = ConvBNRelu(3, c64, kernel=7, stride=2)
        self.pool = nn.MaxPool2d(3, stride=2, padding=1)
        self.img_block = ConvBlock(c64, c64)
        self.hm_block = ConvBlock(nj, c64)
        self.enc7 = ConvBlock(2 * c64, c128, stride=2)
        self.enc8 = ConvBlock(c128, c256, stride=2)
        self.enc9 = ConvBlock(c256, c512, stride=2)
        self.fc_mu = nn.Linear(c512, z)
        self.fc_logvar = nn.Linear(c512, z)

        if config.destination_posterior:
            self.dest_block1 = ConvBlock(1, c64, stride=2)
            self.dest_block2 = ConvBlock(c64, c128, stride=2)
            self.dest_fc = nn.Linear(c128, c512)

        self.dec14 = ConvBNRelu(z, c512, kernel=3)
        self.dec15 = ConvBlock(c512, c512)
        self.dec17 = ConvBlock(c512, c256)
        self.dec19 = ConvBlock(c256, c128)
        self.dec21 = ConvBlock(c128, c64)
        self.head22 = nn.Conv2d(c64, 1, kernel_size=1)
        init_weights(self)

    # ── encoder ──────────────────────────────────────────────────────────

    def condition(self, image: torch.Tensor, history_heatmaps: torch.Tensor,
                  collect: Optional[Dict[str, torch.Tensor]] = None) -> GoalCondition:
        """Run the shared trunk over (image, history heatmaps)."""
        cfg = self.config
        gh, gw = cfg.grid_size
        nj = cfg.n_history * cfg.joint_count
        if image.shape[-3:] != (3, *cfg.image_size):
            raise ValueError(f"image must be [*, 3, {cfg.image_size[0]}, "
                             f"{cfg.image_size[1]}], got {tuple(image.shape)}")
        if history_heatmaps.shape[-3:] != (nj, gh, gw):
            raise ValueError(f"history heatmaps must be [*, {nj}, {gh}, {gw}], "
                             f"got {tuple(history_heatmaps.shape)}")
        t3 = self.img_stem(image)
        t4 = self.pool(t3)
        t5 = self.img_block(t4)
        t6 = self.hm_block(history_heatmaps)
        t7 = self.enc7(torch.cat([t5, t6], dim=1))
        t8 = self.enc8(t7)
        t9 = self.enc9(t8)
        vec = global_avg_pool(t9)
        if collect is not None:
            collect.update({"3": t3, "4": t4, "5": t5, "6": t6, "7": t7,
                            "8": t8, "9": t9, "10": vec})
        sizes = (t5.shape[-2:], t7.shape[-2:], t8.shape[-2:])
        return GoalCondition(feat_map=t9, feat_vec=vec, skip_sizes=sizes)

    def posterior(self, cond: GoalCondition,
                  destination_heatmap: Optional[torch.Tensor] = None,
                  collect: Optional[Dict[str, torch.Tensor]] = None) -> GoalLatent:
        vec = cond.feat_vec
        if destination_heatmap is not None:
            if not self.config.destination_posterior:
                raise ValueError("model built without the destination branch")
            d = self.dest_block1(destination_heatmap)
            d = self.dest_block2(d)
            vec = vec + self.dest_fc(global_avg_pool(d))
        mu = self.fc_mu(vec)
        sigma = torch.exp(0.5 * self.fc_logvar(vec))
        if collect is not None:
            collect.update({"11": mu, "12": sigma})
        return GoalLatent(mu=mu, sigma=sigma)

    def encode(self, history_heatmaps: torch.Tensor, image: torch.Tensor,
               destination_heatmap: Optional[torch.Tensor] = None) -> GoalLatent:
        cond = self.condition(image, history_heatmaps)
        return self.posterior(cond, destination_heatmap)

    # ── decoder ──────────────────────────────────────────────────────────

    def decode(self, z: torch.Tensor, cond: GoalCondition,
               collect: Optional[Dict[str, torch.Tensor]] = None) -> torch.Tensor:
        """Decode latent vectors [B, Z] to heatmap logits [B, 1, gh, gw]."""
        bh, bw = cond.feat_map.shape[-2:]
        t13 = z[:, :, None, None].expand(-1, -1, bh, bw)
        t14 = self.dec14(t13) + cond.feat_map  # image conditioning
        t15 = self.dec15(t14)
        t16 = nearest_upsample(t15, size=cond.skip_sizes[2])
        t17 = self.dec17(t16)
        t18 = nearest_upsample(t17, size=cond.skip_sizes[1])
        t19 = self.dec19(t18)
        t20 = nearest_upsample(t19, size=cond.skip_sizes[0])
        t21 = self.dec21(t20)
        t22 = self.head22(t21)
        if collect is not None:
            collect.update({"13": t13, "14": t14, "15": t15, "16": t16,
                            "17": t17, "18": t18, "19": t19, "20": t20,
                            "21": t21, "22": t22})
        return t22

    def forward(self, image: torch.Tensor, history_heatmaps: torch.Tensor,
                destination_heatmap: Optional[torch.Tensor] = None,
                generator: Optional[torch.Generator] = None) -> dict:
        """Training-mode forward: reparametrized z = mu + sigma * eps."""
        cond = self.condition(image, history_heatmaps)
        latent = self.posterior(cond, destination_heatmap)
        eps = torch.randn(latent.mu.shape, generator=generator,
                          dtype=latent.mu.dtype, device=latent.mu.device)
        z = latent.mu + latent.sigma * eps
        logits = self.decode(z, cond)
        coords = soft_argmax(logits[:, 0], temperature=1.0,
                             stride=float(HEATMAP_STRIDE))
        return {"latent": latent, "z": z, "logits": logits, "coords": coords}


def goal_loss(pred_dest: torch.Tensor, gt_dest: torch.Tensor,
              latent: GoalLatent) -> Tuple[torch.Tensor, torch.Tensor]:
    """(L_dest2D, L_KL). Coordinates: sum of |du|+|dv| per sample, batch mean.

    L_KL = 1/2 sum_i (mu_i^2 + sigma_i^2 - log sigma_i^2 - 1), batch mean.
    """
    if (latent.sigma <= 0).any():
        raise ValueError("sigma must be positive")
    pred = pred_dest.reshape(-1, 2)
    gt = gt_dest.reshape(-1, 2)
    l_dest = (gt - pred).abs().sum(dim=-1).mean()
    var = latent.sigma ** 2
    l_kl = 0.5 * (latent.mu ** 2 + var - torch.log(var) - 1.0).sum(dim=-1).mean()
    return l_dest, l_kl


def sample_goals(model: GoalNet, image: torch.Tensor,
                 history_heatmaps: torch.Tensor, count: int,
                 seed: int = 0) -> List[GoalSample]:
    """Draw `count` destinations from the prior; deterministic per seed.

    Samples for (seed, K) are a prefix of samples for (seed, K') when K' > K:
    the generator stream is consumed in sample order.
    """
    if count < 1:
        raise ValueError("count must be >= 1")
    if image.dim() == 3:
        image = image[None]
    if history_heatmaps.dim() == 3:
        history_heatmaps = history_heatmaps[None]
    was_training = model.training
    model.eval()
    gen = torch.Generator().manual_seed(seed)
    out: List[GoalSample] = []
    with torch.no_grad():
        cond = model.condition(image, history_heatmaps)
        # One draw per sample keeps (seed, K) a prefix of (seed, K' > K);
        # a single randn(K, Z) call fills by blocks and breaks that.
        z = torch.stack([torch.randn(model.config.latent_dim, generator=gen)
                         for _ in range(count)])
        wide = GoalCondition(
            feat_map=cond.feat_map.expand(count, -1, -1, -1),
            feat_vec=cond.feat_vec.expand(count, -1),
            skip_sizes=cond.skip_sizes,
        )
        logits = model.decode(z, wide)[:, 0]  # [K, gh, gw]
        flat = torch.softmax(logits.reshape(count, -1), dim=-1)
        probs = flat.reshape(logits.shape)
    if was_training:
        model.train()
    for i in range(count):
        grid = probs[i].numpy().astype(np.float32)
        hm = Heatmap(grid=grid, stride=float(HEATMAP_STRIDE))
        dest = heatmap_expectation(hm)  # cached; tests assert exact identity
        out.append(GoalSample(heatmap=hm, destination=dest,
                              z_used=z[i].numpy().copy()))
    return out


# ── data preparation ─────────────────────────────────────────────────────

def history_heatmap_channels(history2d: np.ndarray, sigma: float,
                             grid_shape: Tuple[int, int],
                             stride: float) -> np.ndarray:
    """Render [N, J, 2] history joints as an [N*J, gh, gw] channel stack."""
    n, j, _ = history2d.shape
    return render_heatmap_stack(history2d.reshape(n * j, 2), sigma,
                                grid_shape, stride)


def image_tensor(image_u8: np.ndarray) -> torch.Tensor:
    """[H, W, 3] uint8 -> [3, H, W] float in [0, 1]."""
    return torch.from_numpy(image_u8.astype(np.float32) / 255.0).permute(2, 0, 1)


def prepare_goal_inputs(sample, config: GoalNetConfig):
    """SceneSample-like -> (image [3,H,W], heatmaps [NJ,gh,gw], dest [2], dest_hm [1,gh,gw])."""
    gh, gw = config.grid_size
    hist = sample.poses2d.values[: config.n_history]
    hms = history_heatmap_channels(hist, config.heatmap_sigma, (gh, gw),
                                   float(HEATMAP_STRIDE))
    dest = np.asarray(sample.destination2d, dtype=np.float32)
    dest_hm = render_heatmap_stack(dest[None], config.heatmap_sigma, (gh, gw),
                                   float(HEATMAP_STRIDE))
    return (image_tensor(sample.image), torch.from_numpy(hms),
            torch.from_numpy(dest), torch.from_numpy(dest_hm))


def train_goalnet(samples, config: GoalNetConfig, seed: int,
                  checkpoint_path: Optional[str] = None,
                  log=None) -> dict:
    """Stage-wise training on SceneSample-like records. Returns history."""
    torch.manual_seed(seed)
    model = GoalNet(config)
    opt = torch.optim.Adam(model.parameters(), lr=config.learning_rate,
                           weight_decay=config.weight_decay)

    images, heatmaps, dests, dest_hms = [], [], [], []
    for s in samples:
        img, hm, dest, dhm = prepare_goal_inputs(s, config)
        images.append(img)
        heatmaps.append(hm)
        dests.append(dest)
        dest_hms.append(dhm)
    images = torch.stack(images)
    heatmaps = torch.stack(heatmaps)
    dests = torch.stack(dests)
    dest_hms = torch.stack(dest_hms)

    m = len(samples)
    batch = min(config.batch_size, m)
    gen = torch.Generator().manual_seed(seed)
    model.train()
    history = {"loss": [], "dest": [], "kl": []}
    for epoch in range(config.epochs):
        perm = torch.randperm(m, generator=gen)
        for start in range(0, m, batch):
            idx = perm[start:start + batch]
            dest_hm = dest_hms[idx] if config.destination_posterior else None
            out = model(images[idx], heatmaps[idx], dest_hm, generator=gen)
            l_dest, l_kl = goal_loss(out["coords"], dests[idx], out["latent"])
            loss = l_dest + config.kl_weight * l_kl
            opt.zero_grad()
            loss.backward()
            opt.step()
            history["loss"].append(loss.item())
            history["dest"].append(l_dest.item())
            history["kl"].append(l_kl.item())
        if log is not None:
            log(f"goalnet epoch {epoch + 1}/{config.epochs} "
                f"dest {history['dest'][-1]:.3f} kl {history['kl'][-1]:.3f}")
    if checkpoint_path is not None:
        meta = {"stage": "goalnet", "seed": seed, "config": vars(config).copy()}
        meta["config"]["image_size"] = tuple(config.image_size)
        save_checkpoint(checkpoint_path, model, meta)
    return {"model": model, "history": history}


def goalnet_from_checkpoint(path: str) -> GoalNet:
    from .netblocks import load_checkpoint

    meta = load_checkpoint(path)
    cfg_dict = dict(meta.get("config", {}))
    cfg_dict["image_size"] = tuple(cfg_dict.get("image_size", (256, 448)))
    config = GoalNetConfig(**cfg_dict)
    model = GoalNet(config)
    load_checkpoint(path, model)
    model.eval()
    return model
