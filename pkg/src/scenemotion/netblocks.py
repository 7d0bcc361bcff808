"""Shared neural building blocks: residual conv blocks, the hourglass stack,
linear stacks, pooling/upsampling, weight init, and checkpoint IO.

Shape schedule of one hourglass stack, for base channels (c0, c1, c2) =
(256, 384, 512) and a 64x112 input (row numbers used in comments below):

    (1)  input            c0 x 64 x 112
    (2)  block s1         c0 x 64 x 112   -> skip for (16)
    (3)  block s2         c1 x 32 x 56
    (4)  block s1         c1 x 32 x 56    -> skip for (13)
    (5)  block s2         c2 x 16 x 28    -> skip for (10)
    (6)  block s2         c2 x  8 x 14    (bottleneck)
    (7)  block s1         c2 x  8 x 14
    (8)  block s1         c2 x  8 x 14
    (9)  upsample         c2 x 16 x 28
    (10) sum (5)+(9)      c2 x 16 x 28
    (11) block s1         c1 x 16 x 28
    (12) upsample (11)    c1 x 32 x 56
    (13) sum (4)+(12)     c1 x 32 x 56
    (14) block s1         c0 x 32 x 56
    (15) upsample         c0 x 64 x 112
    (16) sum (2)+(15)     c0 x 64 x 112   (output)

Spatial dims must be divisible by 4 (two exact halvings); the bottleneck level
uses ceil division and a size-matched nearest upsample, so widths like 28 work.
"""

from __future__ import annotations

import os
from typing import Dict, Optional, Sequence, Tuple

import torch
import torch.nn as nn
import torch.nn.functional as F

from .errors import CheckpointError


def scaled(channels: int, channel_scale: float) -> int:
    """Scale a base channel count, keeping at least one channel."""
    return max(1, int(round(channels * channel_scale)))


class ConvBlock(nn.Module):
    """Two 3x3 convs with BN/ReLU and an internal residual skip.

    The skip is identity when shape is preserved, else a strided 1x1
    projection with BN. Output = ReLU(branch + skip).
    """

    def __init__(self, in_channels: int, out_channels: int, stride: int = 1):
        super().__init__()
        self.conv1 = nn.Conv2d(in_channels, out_channels, 3, stride=stride,
                               padding=1, bias=False)
        self.bn1 = nn.BatchNorm2d(out_channels)
        self.conv2 = nn.Conv2d(out_channels, out_channels, 3, padding=1,
                               bias=False)
        self.bn2 = nn.BatchNorm2d(out_channels)
        if stride != 1 or in_channels != out_channels:
            self.skip = nn.Sequential(
                nn.Conv2d(in_channels, out_channels, 1, stride=stride,
                          bias=False),
                nn.BatchNorm2d(out_channels),
            )
        else:
            self.skip = nn.Identity()

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        branch = F.relu(self.bn1(self.conv1(x)))
        branch = self.bn2(self.conv2(branch))
        return F.relu(branch + self.skip(x))


class ConvBNRelu(nn.Module):
    """Single conv + BN + ReLU (the unbracketed table rows)."""

    def __init__(self, in_channels: int, out_channels: int, kernel: int,
                 stride: int = 1):
        super().__init__()
        self.conv = nn.Conv2d(in_channels, out_channels, kernel, stride=stride,
                              padding=kernel // 2, bias=False)
        self.bn = nn.BatchNorm2d(out_channels)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return F.relu(self.bn(self.conv(x)))


class LinearBlock(nn.Module):
    """Linear + LayerNorm + ReLU."""

    def __init__(self, in_features: int, out_features: int):
        super().__init__()
        self.linear = nn.Linear(in_features, out_features)
        self.norm = nn.LayerNorm(out_features)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return F.relu(self.norm(self.linear(x)))


def nearest_upsample(x: torch.Tensor, factor: int = None,
                     size: Tuple[int, int] = None) -> torch.Tensor:
    """Nearest-neighbor upsampling by integer factor or to an explicit size."""
    if size is not None:
        return F.interpolate(x, size=size, mode="nearest")
    if factor is None or factor < 1:
        raise ValueError("upsample factor must be >= 1")
    return F.interpolate(x, scale_factor=factor, mode="nearest")


def global_avg_pool(x: torch.Tensor) -> torch.Tensor:
    """[B, C, H, W] -> [B, C]."""
    return x.mean(dim=(-2, -1))


def hourglass_channels(channel_scale: float = 1.0) -> Tuple[int, int, int]:
    return (scaled(256, channel_scale), scaled(384, channel_scale),
            scaled(512, channel_scale))


class HourglassStack(nn.Module):
    """Symmetric encoder-decoder block with skip sums; shape-preserving."""

    def __init__(self, channels: Sequence[int] = (256, 384, 512)):
        super().__init__()
        c0, c1, c2 = channels
        self.b2 = ConvBlock(c0, c0)
        self.b3 = ConvBlock(c0, c1, stride=2)
        self.b4 = ConvBlock(c1, c1)
        self.b5 = ConvBlock(c1, c2, stride=2)
        self.b6 = ConvBlock(c2, c2, stride=2)
        self.b7 = ConvBlock(c2, c2)
        self.b8 = ConvBlock(c2, c2)
        self.b11 = ConvBlock(c2, c1)
        self.b14 = ConvBlock(c1, c0)

    def forward(self, x: torch.Tensor,
                collect: Optional[Dict[str, torch.Tensor]] = None) -> torch.Tensor:
        h, w = x.shape[-2], x.shape[-1]
        if h % 4 or w % 4 or h < 4 or w < 4:
            raise ValueError(
                f"hourglass input spatial dims must be multiples of 4, got {h}x{w}")
        t2 = self.b2(x)
        t3 = self.b3(t2)
        t4 = self.b4(t3)
        t5 = self.b5(t4)
        t6 = self.b6(t5)
        t7 = self.b7(t6)
        t8 = self.b8(t7)
        t9 = nearest_upsample(t8, size=t5.shape[-2:])
        t10 = t5 + t9
        t11 = self.b11(t10)
        t12 = nearest_upsample(t11, size=t4.shape[-2:])
        t13 = t4 + t12
        t14 = self.b14(t13)
        t15 = nearest_upsample(t14, size=t2.shape[-2:])
        t16 = t2 + t15
        if collect is not None:
            collect.update({
                "2": t2, "3": t3, "4": t4, "5": t5, "6": t6, "7": t7,
                "8": t8, "9": t9, "10": t10, "11": t11, "12": t12,
                "13": t13, "14": t14, "15": t15, "16": t16,
            })
        return t16


def init_weights(module: nn.Module) -> None:
    """normal(0, 0.02) for conv/linear weights, zero biases, unit norms."""
    for m in module.modules():
        if isinstance(m, (nn.Conv2d, nn.Linear)):
            nn.init.normal_(m.weight, 0.0, 0.02)
            if m.bias is not None:
                nn.init.zeros_(m.bias)
        elif isinstance(m, (nn.BatchNorm2d, nn.LayerNorm)):
            nn.init.ones_(m.weight)
            nn.init.zeros_(m.bias)


def save_checkpoint(path: str, module: nn.Module, metadata: dict) -> None:
    """Single-file archive: state dict keyed by module paths + metadata."""
    payload = {"state_dict": module.state_dict(), "metadata": dict(metadata)}
    tmp = path + ".tmp"
    torch.save(payload, tmp)
    os.replace(tmp, path)


def load_checkpoint(path: str, module: Optional[nn.Module] = None) -> dict:
    """Load a checkpoint; returns its metadata. Raises CheckpointError."""
    if not os.path.exists(path):
        raise CheckpointError(f"checkpoint not found: {path}")
    try:
        payload = torch.load(path, map_location="cpu", weights_only=True)
    except Exception as exc:
        raise CheckpointError(f"unreadable checkpoint {path}: {exc}") from exc
    if not isinstance(payload, dict) or "state_dict" not in payload:
        raise CheckpointError(f"malformed checkpoint {path}")
    if module is not None:
        try:
            module.load_state_dict(payload["state_dict"])
        except Exception as exc:
            raise CheckpointError(
                f"checkpoint {path} does not match the model: {exc}") from exc
    return payload.get("metadata", {})
