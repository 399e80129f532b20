"""Patch-embedding ViT encoder that records feature maps at selected depths."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from mfpose.autograd import functional as F
from mfpose.autograd.nn import LayerNorm, Linear, Module, MultiheadAttention, Parameter, trunc_normal
from mfpose.autograd.tensor import Tensor
from mfpose.errors import ConfigError, DimensionError

INIT_STD = 0.02


@dataclass(frozen=True)
class BackboneConfig:
    img_h: int = 64
    img_w: int = 48
    patch: int = 8
    embed_dim: int = 32
    depth: int = 4
    heads: int = 4
    tap_layers: tuple = (1, 2, 4)
    mlp_ratio: int = 4

    def __post_init__(self):
        object.__setattr__(self, "tap_layers", tuple(int(t) for t in self.tap_layers))
        if self.img_h % self.patch or self.img_w % self.patch:
            raise ConfigError(f"image {self.img_h}x{self.img_w} not divisible by patch {self.patch}")
        if self.embed_dim % self.heads:
            raise ConfigError(f"embed_dim {self.embed_dim} not divisible by heads {self.heads}")
        taps = self.tap_layers
        if not taps or any(b <= a for a, b in zip(taps, taps[1:])) or taps[0] < 1:
            raise ConfigError(f"tap_layers must be strictly increasing and >= 1, got {taps}")
        if taps[-1] != self.depth:
            raise ConfigError(f"last tap layer must equal depth {self.depth}, got {taps}")

    @property
    def grid(self) -> tuple[int, int]:
        return self.img_h // self.patch, self.img_w // self.patch

    @property
    def num_tokens(self) -> int:
        hp, wp = self.grid
        return hp * wp


class PatchEmbed(Module):
    """Non-overlapping patch projection plus a learned absolute position embedding."""

    def __init__(self, cfg: BackboneConfig, rng: np.random.Generator):
        self.cfg = cfg
        self.proj = Linear(3 * cfg.patch * cfg.patch, cfg.embed_dim, rng, std=INIT_STD)
        self.pos_embed = Parameter(trunc_normal(rng, (1, cfg.num_tokens, cfg.embed_dim), INIT_STD))

    def forward(self, images: Tensor) -> Tensor:
        cfg = self.cfg
        if images.ndim != 4 or images.shape[1:] != (3, cfg.img_h, cfg.img_w):
            raise DimensionError(f"expected images (B, 3, {cfg.img_h}, {cfg.img_w}), got {images.shape}")
        b = images.shape[0]
        hp, wp = cfg.grid
        p = cfg.patch
        patches = (images.reshape(b, 3, hp, p, wp, p)
                   .transpose(0, 2, 4, 1, 3, 5)
                   .reshape(b, hp * wp, 3 * p * p))
        return self.proj(patches) + self.pos_embed


class Block(Module):
    """Pre-norm transformer block: x + MHSA(LN x), then x + MLP(LN x)."""

    def __init__(self, dim: int, heads: int, mlp_ratio: int, rng: np.random.Generator):
        self.norm1 = LayerNorm(dim)
        self.attn = MultiheadAttention(dim, heads, rng, std=INIT_STD)
        self.norm2 = LayerNorm(dim)
        self.fc1 = Linear(dim, dim * mlp_ratio, rng, std=INIT_STD)
        self.fc2 = Linear(dim * mlp_ratio, dim, rng, std=INIT_STD)

    def forward(self, x: Tensor) -> Tensor:
        x = x + self.attn(self.norm1(x))
        return x + self.fc2(F.gelu(self.fc1(self.norm2(x))))


class ViTBackbone(Module):
    def __init__(self, cfg: BackboneConfig, rng: np.random.Generator):
        self.cfg = cfg
        self.patch_embed = PatchEmbed(cfg, rng)
        self.blocks = [Block(cfg.embed_dim, cfg.heads, cfg.mlp_ratio, rng) for _ in range(cfg.depth)]

    def encode(self, images: Tensor) -> list[Tensor]:
        """Encode a batch of frames (frames folded into the batch extent).

        Returns one (N, C, Hp, Wp) map per tap layer, taken after the block's
        residual additions.
        """
        cfg = self.cfg
        hp, wp = cfg.grid
        x = self.patch_embed(images)
        n = x.shape[0]
        taps = []
        for depth, block in enumerate(self.blocks, start=1):
            x = block(x)
            if depth in cfg.tap_layers:
                taps.append(x.transpose(0, 2, 1).reshape(n, cfg.embed_dim, hp, wp))
        return taps

    forward = encode
