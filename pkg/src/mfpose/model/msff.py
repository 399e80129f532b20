"""Multi-scale feature fusion over backbone taps.

Per tap: pyramid pooling -> 3x3 conv unification, with the raw tap joining the
pooled branches by default (the pooled branches alone are coarser than the
token grid).  Across taps: channel-wise
concatenation, spatial self-attention with residual + layer norm, a linear map,
the mean over tap groups and a final linear projection back to C channels.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from mfpose.autograd import functional as F
from mfpose.autograd.nn import BatchNorm2d, Conv2d, LayerNorm, Linear, Module, MultiheadAttention
from mfpose.autograd.tensor import Tensor, concat
from mfpose.errors import ConfigError, DimensionError


@dataclass(frozen=True)
class MsffConfig:
    pool_scales: tuple = (1, 2, 3, 6)
    heads: int = 4
    include_input: bool = True    # also feed the raw tap to the unify conv (2C input channels)

    def __post_init__(self):
        object.__setattr__(self, "pool_scales", tuple(int(s) for s in self.pool_scales))
        if not self.pool_scales or min(self.pool_scales) < 1:
            raise ConfigError(f"pool_scales must be positive, got {self.pool_scales}")


class PyramidPooling(Module):
    """Pool at each scale, reduce to C/4 channels with a 1x1 conv + BN + ReLU,
    upsample bilinearly and concatenate the branches (C channels in total)."""

    def __init__(self, channels: int, scales: tuple, rng: np.random.Generator):
        if channels % 4:
            raise ConfigError(f"channel count {channels} must be divisible by 4")
        self.scales = tuple(scales)
        self.branch_channels = channels // 4
        self.convs = [Conv2d(channels, self.branch_channels, 1, rng) for _ in self.scales]
        self.norms = [BatchNorm2d(self.branch_channels) for _ in self.scales]

    @property
    def out_channels(self) -> int:
        return self.branch_channels * len(self.scales)

    def forward(self, x: Tensor) -> Tensor:
        h, w = x.shape[2:]
        branches = []
        for scale, conv, norm in zip(self.scales, self.convs, self.norms):
            # tiny maps: never pool to more cells than the input has
            pooled = F.adaptive_avg_pool2d(x, min(scale, h), min(scale, w))
            y = F.relu(norm(conv(pooled)))
            branches.append(F.interpolate_bilinear(y, h, w))
        return concat(branches, axis=1)


class Unify(Module):
    """3x3 conv (pad 1) -> BN -> ReLU."""

    def __init__(self, in_channels: int, channels: int, rng: np.random.Generator):
        self.conv = Conv2d(in_channels, channels, 3, rng, padding=1)
        self.norm = BatchNorm2d(channels)

    def forward(self, x: Tensor) -> Tensor:
        return F.relu(self.norm(self.conv(x)))


def group_mean(tokens: Tensor, groups: int) -> Tensor:
    """Mean over ``groups`` equal channel slices: (N, S, G*C) -> (N, S, C)."""
    n, s, width = tokens.shape
    if width % groups:
        raise DimensionError(f"width {width} not divisible into {groups} groups")
    return tokens.reshape(n, s, groups, width // groups).mean(axis=2)


class LayerFusion(Module):
    def __init__(self, channels: int, taps: int, heads: int, rng: np.random.Generator):
        width = channels * taps
        self.channels = channels
        self.taps = taps
        self.attn = MultiheadAttention(width, heads, rng)
        self.norm = LayerNorm(width)
        self.expand = Linear(width, width, rng)
        self.proj = Linear(channels, channels, rng)

    def forward(self, taps: list[Tensor]) -> Tensor:
        if len(taps) != self.taps:
            raise DimensionError(f"expected {self.taps} taps, got {len(taps)}")
        shape = taps[0].shape
        if any(t.shape != shape for t in taps):
            raise DimensionError(f"tap shapes differ: {[t.shape for t in taps]}")
        n, c, h, w = shape
        cat = concat(taps, axis=1)                                   # (N, L*C, H, W)
        tokens = cat.reshape(n, self.taps * c, h * w).transpose(0, 2, 1)
        fused = self.norm(tokens + self.attn(tokens))
        fused = group_mean(self.expand(fused), self.taps)            # (N, HW, C)
        out = self.proj(fused)
        return out.transpose(0, 2, 1).reshape(n, c, h, w)


class MSFF(Module):
    def __init__(self, channels: int, num_taps: int, cfg: MsffConfig, rng: np.random.Generator):
        self.cfg = cfg
        self.ppm = [PyramidPooling(channels, cfg.pool_scales, rng) for _ in range(num_taps)]
        unify_in = self.ppm[0].out_channels + (channels if cfg.include_input else 0)
        self.unify = [Unify(unify_in, channels, rng) for _ in range(num_taps)]
        self.fusion = LayerFusion(channels, num_taps, cfg.heads, rng)

    def forward(self, taps: list[Tensor]) -> Tensor:
        if len(taps) != len(self.ppm):
            raise DimensionError(f"expected {len(self.ppm)} taps, got {len(taps)}")
        convs = []
        for t, ppm, unify in zip(taps, self.ppm, self.unify):
            pooled = ppm(t)
            convs.append(unify(concat([t, pooled], axis=1) if self.cfg.include_input else pooled))
        return self.fusion(convs)
