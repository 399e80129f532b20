"""Full multi-frame pose network: backbone -> MSFF -> AFW -> cross-attention -> decoder."""
from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field

import numpy as np

from mfpose.autograd.nn import Module
from mfpose.autograd.tensor import Tensor
from mfpose.errors import ConfigError, DimensionError
from mfpose.model.afw import FrameWeights, QualityHead, uniform_scores, weigh
from mfpose.model.backbone import BackboneConfig, ViTBackbone
from mfpose.model.cross_attention import CrossAttnConfig, TemporalCrossAttention
from mfpose.model.decoder import HeatmapHead
from mfpose.model.msff import MSFF, MsffConfig


@dataclass(frozen=True)
class ModelConfig:
    backbone: BackboneConfig = field(default_factory=BackboneConfig)
    msff: MsffConfig = field(default_factory=MsffConfig)
    cross_attn: CrossAttnConfig = field(default_factory=CrossAttnConfig)
    num_joints: int = 15
    temporal_radius: int = 2
    decoder_channels: int = 32
    use_msff: bool = True
    use_afw: bool = True
    use_cross_attention: bool = True

    def __post_init__(self):
        if self.temporal_radius < 0:
            raise ConfigError("temporal_radius must be >= 0")
        if self.num_joints < 1:
            raise ConfigError("num_joints must be >= 1")
        if self.backbone.embed_dim % 4:
            raise ConfigError(f"embed_dim {self.backbone.embed_dim} must be divisible by 4")
        width = self.backbone.embed_dim * len(self.backbone.tap_layers)
        if self.use_msff and width % self.msff.heads:
            raise ConfigError(f"fusion width {width} not divisible by {self.msff.heads} heads")
        if self.backbone.embed_dim % self.cross_attn.heads:
            raise ConfigError(f"embed_dim not divisible by {self.cross_attn.heads} cross-attention heads")

    @property
    def window(self) -> int:
        return 2 * self.temporal_radius + 1

    @property
    def heatmap_size(self) -> tuple[int, int]:
        hp, wp = self.backbone.grid
        return 4 * hp, 4 * wp

    def to_dict(self) -> dict:
        return asdict(self)

    def hash(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, default=list)
        return hashlib.sha256(blob.encode("utf-8")).hexdigest()[:16]

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        d = dict(d)
        d["backbone"] = BackboneConfig(**d.get("backbone", {}))
        d["msff"] = MsffConfig(**d.get("msff", {}))
        d["cross_attn"] = CrossAttnConfig(**d.get("cross_attn", {}))
        return cls(**d)


def parameter_group(name: str) -> str:
    """Top-level component a parameter belongs to (backbone, msff, afw, ...)."""
    return name.split(".", 1)[0]


class MultiFramePoseNet(Module):
    """Heatmap regressor over a window of 2T+1 frames.

    With cross-attention disabled the model sees only the center frame (the
    single-frame baseline); with MSFF disabled only the final backbone tap is
    used; with AFW disabled every frame gets weight 1/(2T+1).
    """

    def __init__(self, cfg: ModelConfig, rng: np.random.Generator):
        self.cfg = cfg
        c = cfg.backbone.embed_dim
        self.backbone = ViTBackbone(cfg.backbone, rng)
        self.msff = MSFF(c, len(cfg.backbone.tap_layers), cfg.msff, rng) if cfg.use_msff else None
        self.afw = QualityHead(c, rng) if cfg.use_afw and cfg.use_cross_attention else None
        self.cross_attn = TemporalCrossAttention(c, cfg.cross_attn, rng) if cfg.use_cross_attention else None
        self.decoder = HeatmapHead(c, cfg.num_joints, rng, cfg.decoder_channels)
        self.last_frame_weights: FrameWeights | None = None

    def features(self, frames: Tensor) -> Tensor:
        """Center-frame feature map (B, C, Hp, Wp) handed to the decoder."""
        cfg = self.cfg
        if frames.ndim != 5 or frames.shape[1] != cfg.window:
            raise DimensionError(f"expected (B, {cfg.window}, 3, H, W) frames, got {frames.shape}")
        b, t = frames.shape[:2]
        center = cfg.temporal_radius
        if self.cross_attn is None:
            frames = frames[:, center:center + 1]
            t, center = 1, 0
        images = frames.reshape(b * t, *frames.shape[2:])
        taps = self.backbone.encode(images)
        fused = self.msff(taps) if self.msff is not None else taps[-1]
        if self.cross_attn is None:
            self.last_frame_weights = None
            return fused
        scores = self.afw(fused, t) if self.afw is not None else uniform_scores(b, t)
        weighted, self.last_frame_weights = weigh(fused, scores)
        return self.cross_attn(weighted, t, center)

    def forward(self, frames: Tensor) -> Tensor:
        return self.decoder(self.features(frames))
