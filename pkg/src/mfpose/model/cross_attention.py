"""Center/context temporal attention.

Context tokens from all non-center frames first attend to each other jointly;
center-frame tokens then query them.  Both stages use residual + layer norm and
carry no positional encoding, so results are equivariant/invariant to context
token order.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from mfpose.autograd.nn import LayerNorm, Module, MultiheadAttention
from mfpose.autograd.tensor import Tensor, concat
from mfpose.errors import ConfigError, DimensionError

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class CrossAttnConfig:
    heads: int = 4

    def __post_init__(self):
        if self.heads < 1:
            raise ConfigError(f"heads must be positive, got {self.heads}")


def frames_to_tokens(x: Tensor) -> Tensor:
    """(B, C, H, W) -> (B, H*W, C)."""
    b, c, h, w = x.shape
    return x.reshape(b, c, h * w).transpose(0, 2, 1)


def tokens_to_frames(x: Tensor, h: int, w: int) -> Tensor:
    b, n, c = x.shape
    return x.transpose(0, 2, 1).reshape(b, c, h, w)


class TemporalCrossAttention(Module):
    def __init__(self, channels: int, cfg: CrossAttnConfig, rng: np.random.Generator):
        if channels % cfg.heads:
            raise ConfigError(f"channels {channels} not divisible by {cfg.heads} heads")
        self.cfg = cfg
        self.context_attn = MultiheadAttention(channels, cfg.heads, rng)
        self.context_norm = LayerNorm(channels)
        self.cross_attn = MultiheadAttention(channels, cfg.heads, rng)
        self.cross_norm = LayerNorm(channels)

    def context_self_attention(self, context: Tensor) -> Tensor:
        if context.shape[1] == 0:
            log.warning("no context frames; context self-attention is a no-op")
            return context
        return self.context_norm(context + self.context_attn(context))

    def cross_attend(self, center: Tensor, context: Tensor) -> Tensor:
        """Center tokens (B, HW, C) query context tokens (B, N, C)."""
        if context.shape[1] == 0:
            return center
        if center.shape[0] != context.shape[0] or center.shape[2] != context.shape[2]:
            raise DimensionError(f"center {center.shape} and context {context.shape} disagree")
        return self.cross_norm(center + self.cross_attn(center, context, context))

    @property
    def attention_maps(self) -> np.ndarray | None:
        """Cross-attention weights of the last call, (B, heads, HW, N)."""
        return self.cross_attn.last_weights

    def forward(self, features: Tensor, frames: int, center: int) -> Tensor:
        """features: (B*T, C, H, W) with frames folded in; returns (B, C, H, W)."""
        n, c, h, w = features.shape
        if n % frames:
            raise DimensionError(f"batch extent {n} not divisible by {frames} frames")
        b = n // frames
        seq = features.reshape(b, frames, c, h, w)
        center_tokens = frames_to_tokens(seq[:, center])
        if frames == 1:
            log.warning("single-frame window; cross-attention passes the center through")
            return seq[:, center]
        ctx = concat([seq[:, :center], seq[:, center + 1:]], axis=1)  # (B, T-1, C, H, W)
        ctx_tokens = ctx.transpose(0, 1, 3, 4, 2).reshape(b, (frames - 1) * h * w, c)
        ctx_tokens = self.context_self_attention(ctx_tokens)
        return tokens_to_frames(self.cross_attend(center_tokens, ctx_tokens), h, w)
