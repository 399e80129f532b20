"""Finite-difference gradient suite over every model component, alone and composed."""
from __future__ import annotations

import time
from dataclasses import dataclass
from typing import Callable

import numpy as np

from mfpose.autograd.tensor import Tensor, default_dtype
from mfpose.gradcheck import TOLERANCE, check_gradients
from mfpose.model.afw import QualityHead, weigh
from mfpose.model.backbone import ViTBackbone
from mfpose.model.cross_attention import TemporalCrossAttention
from mfpose.model.decoder import HeatmapHead
from mfpose.model.msff import MSFF
from mfpose.model.network import ModelConfig, MultiFramePoseNet, parameter_group


@dataclass
class SuiteResult:
    groups: dict          # "scope/group" -> max relative error
    seconds: float
    coords: int

    def failures(self, tol: float = TOLERANCE) -> list:
        return sorted(g for g, e in self.groups.items() if not e < tol)

    def passed(self, tol: float = TOLERANCE) -> bool:
        return not self.failures(tol)

    def lines(self, tol: float = TOLERANCE) -> list:
        return [f"{g:<28} max rel err {e:.3e}  {'ok' if e < tol else 'FAIL'}" for g, e in self.groups.items()]


def _projected(out: Tensor, rng: np.random.Generator) -> Tensor:
    """Random linear functional of the output: exercises every output coordinate."""
    return (out * rng.standard_normal(out.shape)).sum()


def gradient_suite(cfg: ModelConfig | None = None, seed: int = 0, *, batch: int = 2, max_coords: int = 4,
                   corrupt: Callable[[str], bool] | None = None) -> SuiteResult:
    """Check each component in isolation (parameters and input), then the whole network.

    ``corrupt(group)`` is the self-test hook: matching groups get a scaled
    analytic gradient and must then fail.
    """
    cfg = cfg or ModelConfig()
    start = time.perf_counter()
    groups: dict = {}
    coords = 0
    c = cfg.backbone.embed_dim
    hp, wp = cfg.backbone.grid
    t = cfg.window
    with default_dtype(np.float64):
        rng = np.random.default_rng(seed)

        def run(scope: str, module, inputs: dict, loss_fn):
            nonlocal coords
            tensors = {f"{n}": p for n, p in module.named_parameters()}
            tensors.update(inputs)
            naming = (lambda n: f"{scope}/{'input' if n in inputs else parameter_group(n) if scope == 'model' else 'params'}")
            res = check_gradients(loss_fn, tensors, groups=naming, rng=np.random.default_rng(seed),
                                  max_coords=max_coords,
                                  corrupt=None if corrupt is None else (lambda n: corrupt(naming(n))))
            coords += res.coords_checked
            groups.update(res.per_group)

        images = Tensor(rng.standard_normal((batch, 3, cfg.backbone.img_h, cfg.backbone.img_w)), requires_grad=True)
        backbone = ViTBackbone(cfg.backbone, rng)
        weights = [rng.standard_normal((batch, c, hp, wp)) for _ in cfg.backbone.tap_layers]
        run("backbone", backbone, {"images": images},
            lambda: sum(((tap * w).sum() for tap, w in zip(backbone.encode(images), weights)), Tensor(0.0)))

        taps = [Tensor(rng.standard_normal((batch, c, hp, wp)), requires_grad=True) for _ in cfg.backbone.tap_layers]
        msff = MSFF(c, len(taps), cfg.msff, rng)
        r = rng.standard_normal((batch, c, hp, wp))
        run("msff", msff, {f"tap{i}": x for i, x in enumerate(taps)}, lambda: (msff(taps) * r).sum())

        feats = Tensor(rng.standard_normal((batch * t, c, hp, wp)), requires_grad=True)
        head = QualityHead(c, rng)
        r = rng.standard_normal((batch * t, c, hp, wp))
        run("afw", head, {"features": feats}, lambda: (weigh(feats, head(feats, t))[0] * r).sum())

        xattn = TemporalCrossAttention(c, cfg.cross_attn, rng)
        r = rng.standard_normal((batch, c, hp, wp))
        run("cross_attention", xattn, {"features": feats},
            lambda: (xattn(feats, t, cfg.temporal_radius) * r).sum())

        dec_in = Tensor(rng.standard_normal((batch, c, hp, wp)), requires_grad=True)
        decoder = HeatmapHead(c, cfg.num_joints, rng, cfg.decoder_channels)
        hh, hw = cfg.heatmap_size
        r = rng.standard_normal((batch, cfg.num_joints, hh, hw))
        run("decoder", decoder, {"features": dec_in}, lambda: (decoder(dec_in) * r).sum())

        model = MultiFramePoseNet(cfg, rng)
        frames = Tensor(rng.standard_normal((batch, t, 3, cfg.backbone.img_h, cfg.backbone.img_w)))
        r = rng.standard_normal((batch, cfg.num_joints, hh, hw))
        run("model", model, {}, lambda: (model(frames) * r).sum())
    return SuiteResult(groups, time.perf_counter() - start, coords)
