"""Adaptive frame weighting: a learned scalar quality per frame, softmaxed over the window."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from mfpose.autograd import functional as F
from mfpose.autograd.nn import Conv2d, Linear, Module
from mfpose.autograd.tensor import Tensor
from mfpose.errors import DimensionError, UsageError


@dataclass
class FrameWeights:
    scores: Tensor    # (B, T) raw quality scores
    weights: Tensor   # (B, T) softmax over T


class QualityHead(Module):
    """Conv3x3 (C->C) -> ReLU -> global average pool -> Linear(C->1)."""

    def __init__(self, channels: int, rng: np.random.Generator):
        self.conv = Conv2d(channels, channels, 3, rng, padding=1)
        self.fc = Linear(channels, 1, rng)

    def forward(self, features: Tensor, frames: int) -> Tensor:
        n, c = features.shape[:2]
        if frames < 1 or n % frames:
            raise DimensionError(f"cannot split batch extent {n} into windows of {frames} frames")
        pooled = F.adaptive_avg_pool2d(F.relu(self.conv(features)), 1, 1).reshape(n, c)
        return self.fc(pooled).reshape(n // frames, frames)


def weigh(features: Tensor, scores: Tensor) -> tuple[Tensor, FrameWeights]:
    """Scale each frame's map by its softmax weight. features: (B*T, C, H, W)."""
    b, t = scores.shape
    if t == 0:
        raise UsageError("frame weighting needs at least one frame")
    n, c, h, w = features.shape
    if n != b * t:
        raise DimensionError(f"features {features.shape} do not match scores {scores.shape}")
    weights = F.softmax(scores, axis=1)
    weighted = features.reshape(b, t, c, h, w) * weights.reshape(b, t, 1, 1, 1)
    return weighted.reshape(n, c, h, w), FrameWeights(scores, weights)


def uniform_scores(batch: int, frames: int) -> Tensor:
    return Tensor(np.zeros((batch, frames)))

