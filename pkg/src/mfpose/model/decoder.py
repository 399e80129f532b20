from __future__ import annotations

import numpy as np

from mfpose.autograd import functional as F
from mfpose.autograd.nn import BatchNorm2d, Conv2d, ConvTranspose2d, Module
from mfpose.autograd.tensor import Tensor

FINAL_STD = 1e-3


class HeatmapHead(Module):
    """Two (deconv stride 2 -> BN -> ReLU) blocks, then a 3x3 conv to K heatmaps.

    Output resolution is 4x the input grid.  The final conv starts near zero
    (std FINAL_STD) so initial heatmaps sit close to the mostly-zero targets.
    """

    def __init__(self, in_channels: int, num_joints: int, rng: np.random.Generator,
                 channels: int = 32):
        self.deconv1 = ConvTranspose2d(in_channels, channels, rng)
        self.norm1 = BatchNorm2d(channels)
        self.deconv2 = ConvTranspose2d(channels, channels, rng)
        self.norm2 = BatchNorm2d(channels)
        self.final = Conv2d(channels, num_joints, 3, rng, padding=1)
        self.final.weight.data[...] = rng.standard_normal(self.final.weight.shape) * FINAL_STD

    def forward(self, x: Tensor) -> Tensor:
        x = F.relu(self.norm1(self.deconv1(x)))
        x = F.relu(self.norm2(self.deconv2(x)))
        return self.final(x)
