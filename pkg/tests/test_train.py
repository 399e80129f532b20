import json

import numpy as np
import pytest

from mfpose.autograd import Tensor
from mfpose.autograd.nn import Parameter
from mfpose.codec import mse_loss
from mfpose.data import DatasetSpec, make_dataset
from mfpose.errors import ConfigError, NumericError, UsageError
from mfpose.metrics import random_guess_pck
from mfpose.model import BackboneConfig, ModelConfig, MsffConfig, parameter_group
from mfpose.model.cross_attention import CrossAttnConfig
from mfpose.train.engine import batch_arrays
from mfpose.train import (AdamW, TrainConfig, build_model, evaluate, evaluate_heatmaps,
                          evaluate_model, load_checkpoint, model_from_checkpoint, overfit, step_lr, train,
                          with_ablation)

TINY_MODEL = ModelConfig(
    backbone=BackboneConfig(img_h=32, img_w=24, patch=8, embed_dim=16, depth=2, heads=2, tap_layers=(1, 2),
                            mlp_ratio=2),
    msff=MsffConfig(heads=2), cross_attn=CrossAttnConfig(heads=2), decoder_channels=8)
TINY = TrainConfig(model=TINY_MODEL, batch_size=4, epochs=2, lr=1e-3)


@pytest.fixture(scope="module")
def tiny_data():
    return make_dataset(DatasetSpec(num_videos=2, frames_per_video=5), seed=3, out_size=(32, 24),
                        heatmap_shape=(16, 12))


# optimizer and schedule ----------------------------------------------------

def _param(value):
    p = Parameter(np.array(value, dtype=np.float64))
    return p, AdamW([("p", p)])


def test_zero_grad_no_decay_leaves_params():
    p, opt = _param([1.0, -2.0])
    p.grad = np.zeros(2)
    for _ in range(5):
        opt.step(0.1)
    np.testing.assert_array_equal(p.data, [1.0, -2.0])
    opt.step(0.1)                                  # missing grad counts as zero
    np.testing.assert_array_equal(p.data, [1.0, -2.0])


def test_decay_is_multiplicative_shrink():
    p = Parameter(np.array([1.0, -2.0]))
    opt = AdamW([("p", p)], weight_decay=0.1)
    p.grad = np.zeros(2)
    opt.step(0.01)
    np.testing.assert_array_equal(p.data, np.array([1.0, -2.0]) * (1 - 0.01 * 0.1))


def test_first_step_moves_by_lr():
    p, opt = _param([0.0])
    p.grad = np.array([123.0])
    opt.step(0.01)
    np.testing.assert_allclose(p.data, [-0.01], rtol=1e-6)


def test_quadratic_converges():
    # minimum of (p - 3)^2 is p = 3
    p = Parameter(np.array([0.0]))
    opt = AdamW([("p", p)], betas=(0.5, 0.9))
    for _ in range(100):
        p.grad = None
        ((p - 3.0) * (p - 3.0)).sum().backward()
        opt.step(0.1)
    assert abs(p.data[0] - 3.0) < 1e-3


def test_non_finite_gradient_names_parameter():
    p, opt = _param([1.0])
    p.grad = np.array([np.nan])
    with pytest.raises(NumericError, match="'p'"):
        opt.step(0.1)
    np.testing.assert_array_equal(p.data, [1.0])


def test_step_lr_values():
    assert [step_lr(e, 5e-6, 5, 0.5) for e in (0, 4, 5, 9, 10)] == [5e-6, 5e-6, 2.5e-6, 2.5e-6, 1.25e-6]
    assert {step_lr(e, 1e-3, 5, 1.0) for e in range(30)} == {1e-3}
    with pytest.raises(ValueError):
        step_lr(-1, 1e-3, 5, 0.5)


# configuration ---------------------------------------------------------------

def test_train_config_roundtrip_and_validation():
    cfg = TrainConfig(lr=5e-6, precision="float32")
    assert TrainConfig.from_dict(json.loads(json.dumps(cfg.to_dict()))) == cfg
    assert cfg.hash() != TrainConfig().hash()
    for bad in [dict(lr=0), dict(lr_gamma=1.5), dict(batch_size=1), dict(precision="float16"), dict(epochs=-1)]:
        with pytest.raises(ConfigError):
            TrainConfig(**bad)
    with pytest.raises(ConfigError):
        TrainConfig.from_dict({"learning_rate": 1})


def test_with_ablation():
    cfg = with_ablation(TrainConfig(), ["afw", "msff", "cross-attn"])
    assert not (cfg.model.use_afw or cfg.model.use_msff or cfg.model.use_cross_attention)
    with pytest.raises(ConfigError):
        with_ablation(TrainConfig(), ["decoder"])


# training loop ----------------------------------------------------------------

@pytest.mark.parametrize("seed", range(5))
def test_every_group_receives_gradient(seed, tiny_data):
    cfg = TrainConfig(model=TINY_MODEL, seed=seed)
    model = build_model(cfg)
    images, targets, masks, _ = batch_arrays([s.window for s in tiny_data[:3]], (16, 12), 2.0, np.float64)
    mse_loss(model(Tensor(images)), targets + 0.1, masks).backward()
    norms = {}
    for name, p in model.named_parameters():
        assert p.grad is not None and np.isfinite(p.grad).all(), name
        norms[parameter_group(name)] = norms.get(parameter_group(name), 0.0) + float(np.sum(p.grad ** 2))
        if p.ndim >= 2:
            assert np.abs(p.grad).max() > 0, name
    assert set(norms) == {"backbone", "msff", "afw", "cross_attn", "decoder"}
    assert all(v > 0 for v in norms.values())


def test_overfit_one_batch_reduces_loss(tiny_data):
    losses = overfit(TINY, [s.window for s in tiny_data[:4]], steps=60)
    assert losses[-1] < 0.5 * losses[0]


def test_training_is_deterministic(tiny_data, tmp_path):
    a = train(TINY, tiny_data, tmp_path / "a")
    b = train(TINY, tiny_data, tmp_path / "b")
    assert a.losses == b.losses and len(a.losses) == 2 * 3
    assert (tmp_path / "a" / "loss.jsonl").read_bytes() == (tmp_path / "b" / "loss.jsonl").read_bytes()
    ra, _ = evaluate(a.checkpoints[-1], tiny_data)
    rb, _ = evaluate(b.checkpoints[-1], tiny_data)
    assert ra.to_dict() == rb.to_dict()
    rc, _ = evaluate(a.checkpoints[-1], tiny_data)
    assert rc.to_dict() == ra.to_dict()


def test_resume_is_bit_exact(tiny_data, tmp_path):
    cfg = TrainConfig(model=TINY_MODEL, batch_size=4, epochs=3)
    full = train(cfg, tiny_data, tmp_path / "full")
    part = train(cfg, tiny_data, tmp_path / "part", max_steps=6)
    assert part.epoch == 2
    rest = train(cfg, tiny_data, tmp_path / "part", resume=tmp_path / "part" / "ckpt_0002.mfpt")
    assert part.losses + rest.losses == full.losses
    a, _ = load_checkpoint(tmp_path / "full" / "ckpt_0003.mfpt")
    b, _ = load_checkpoint(tmp_path / "part" / "ckpt_0003.mfpt")
    assert list(a) == list(b)
    for k in a:
        np.testing.assert_array_equal(a[k], b[k])
    lines = (tmp_path / "part" / "loss.jsonl").read_text().splitlines()
    assert len(lines) == len(full.losses)


def test_resume_refuses_other_config(tiny_data, tmp_path):
    res = train(TINY, tiny_data, tmp_path, max_steps=1)
    with pytest.raises(ConfigError):
        train(TrainConfig(model=TINY_MODEL, batch_size=4, epochs=2, lr=2e-3), tiny_data, resume=res.checkpoints[-1])


def test_checkpoint_model_mismatch_refused(tiny_data, tmp_path):
    res = train(TINY, tiny_data, tmp_path, max_steps=1)
    with pytest.raises(ConfigError, match="model"):
        model_from_checkpoint(res.checkpoints[0], with_ablation(TINY, ["afw"]))
    with pytest.raises(FileNotFoundError):
        model_from_checkpoint(tmp_path / "missing.mfpt")


def test_zero_epochs_writes_initial_checkpoint_only(tiny_data, tmp_path):
    res = train(TrainConfig(model=TINY_MODEL, batch_size=4, epochs=0), tiny_data, tmp_path)
    assert [p.name for p in res.checkpoints] == ["ckpt_0000.mfpt"] and res.losses == []


def test_nan_loss_aborts_with_diagnostics(tiny_data):
    bad = [s.window for s in tiny_data]
    bad[0] = type(bad[0])(**{**bad[0].__dict__, "sources": [np.full_like(f, np.nan) for f in bad[0].sources]})
    cfg = TrainConfig(model=TINY_MODEL, batch_size=len(bad), epochs=1, augment=False)
    with pytest.raises(NumericError, match="lr"):
        train(cfg, bad)


def test_empty_dataset_refused():
    with pytest.raises(UsageError):
        train(TINY, [])


def test_progress_lines(tiny_data):
    lines = []
    train(TrainConfig(model=TINY_MODEL, batch_size=4, epochs=2, lr=5e-6), tiny_data, progress=lines.append)
    assert lines[0].startswith("epoch 0 (of 2)  lr 5e-06  loss ")


@pytest.mark.parametrize("ablate", [[], ["afw"], ["msff"], ["crossattn"], ["afw", "msff", "crossattn"]])
def test_ablations_train(tiny_data, ablate):
    res = train(with_ablation(TINY, ablate), tiny_data, max_steps=1)
    assert len(res.losses) == 1 and np.isfinite(res.losses[0])


def test_float32_training(tiny_data):
    res = train(TrainConfig(model=TINY_MODEL, batch_size=4, epochs=1, precision="float32"), tiny_data, max_steps=2)
    assert res.model.parameters()[0].dtype == np.float32 and np.isfinite(res.losses).all()


# evaluation ---------------------------------------------------------------------

def test_gt_heatmaps_score_perfect():
    samples = make_dataset(DatasetSpec(num_videos=3, frames_per_video=5), seed=8)
    rep = evaluate_heatmaps([s.target.maps for s in samples], [s.window for s in samples])
    assert rep.mean_pck == 1.0 and rep.mean_ap == 1.0


def test_untrained_model_near_random_baseline():
    samples = make_dataset(DatasetSpec(num_videos=4), seed=2)
    windows = [s.window for s in samples]
    rnd = random_guess_pck([w.pose for w in windows], (64, 48), [w.transform for w in windows],
                           np.random.default_rng(0))
    rep, preds = evaluate_model(build_model(TrainConfig()), samples)
    assert abs(rep.mean_pck - rnd) < 0.03
    assert preds.frame_weights.shape == (len(samples), 5)
