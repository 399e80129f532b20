from mfpose.model.afw import FrameWeights, QualityHead, weigh
from mfpose.model.backbone import BackboneConfig, ViTBackbone
from mfpose.model.cross_attention import CrossAttnConfig, TemporalCrossAttention
from mfpose.model.decoder import HeatmapHead
from mfpose.model.msff import MSFF, MsffConfig
from mfpose.model.network import ModelConfig, MultiFramePoseNet, parameter_group

__all__ = [
    "BackboneConfig",
    "CrossAttnConfig",
    "FrameWeights",
    "HeatmapHead",
    "MSFF",
    "ModelConfig",
    "MsffConfig",
    "MultiFramePoseNet",
    "QualityHead",
    "TemporalCrossAttention",
    "ViTBackbone",
    "parameter_group",
    "weigh",
]
