"""Training loop, checkpoints and evaluation.

Randomness flows from one seed: a SeedSequence spawns the model-init stream and
the data stream (batch order and augmentation).  The data stream's state is
saved in every checkpoint, so resuming continues the same trajectory.

Checkpoints are ``ckpt_XXXX.mfpt`` files (XXXX = epochs completed) in the
parameter container format; they hold parameters, buffers and Adam moments, and
carry the epoch, step count, data-stream state, configuration and its hash in
the metadata.
"""
from __future__ import annotations

import json
import logging
import time
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Callable

import numpy as np

from mfpose.autograd import serialize
from mfpose.autograd.tensor import Tensor, default_dtype, no_grad
from mfpose.codec import DEFAULT_SIGMA, HeatmapStack, Pose, decode_pose, mse_loss
from mfpose.data.dataset import Sample, heatmap_target
from mfpose.data.windows import DEFAULT_DELTA, FrameWindow, augment
from mfpose.errors import ConfigError, NumericError, UsageError
from mfpose.metrics import EvalReport, report
from mfpose.model.network import ModelConfig, MultiFramePoseNet
from mfpose.train.optim import AdamW, global_norm, step_lr

log = logging.getLogger(__name__)

CHECKPOINT_PATTERN = "ckpt_{:04d}.mfpt"


@dataclass(frozen=True)
class TrainConfig:
    model: ModelConfig = field(default_factory=ModelConfig)
    batch_size: int = 16
    epochs: int = 20
    lr: float = 1e-3
    weight_decay: float = 0.1
    lr_step: int = 5
    lr_gamma: float = 0.5
    betas: tuple = (0.9, 0.999)
    eps: float = 1e-8
    delta: float = DEFAULT_DELTA
    sigma: float = DEFAULT_SIGMA
    augment: bool = True
    precision: str = "float64"
    seed: int = 0

    def __post_init__(self):
        if not self.lr > 0:
            raise ConfigError(f"lr must be > 0, got {self.lr}")
        if not 0 < self.lr_gamma <= 1:
            raise ConfigError(f"lr_gamma must lie in (0, 1], got {self.lr_gamma}")
        if self.lr_step < 1:
            raise ConfigError("lr_step must be >= 1")
        if self.batch_size < 2:
            raise ConfigError("batch_size must be >= 2 (batch normalisation needs two samples)")
        if self.epochs < 0:
            raise ConfigError("epochs must be >= 0")
        if self.delta < 1:
            raise ConfigError("delta must be >= 1")
        if self.precision not in ("float64", "float32"):
            raise ConfigError(f"precision must be float64 or float32, got {self.precision!r}")

    @property
    def dtype(self):
        return np.dtype(self.precision)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["betas"] = list(self.betas)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        d = dict(d)
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(d) - known)
        if unknown:
            raise ConfigError(f"unknown training keys: {unknown}")
        if "model" in d:
            d["model"] = ModelConfig.from_dict(d["model"])
        if "betas" in d:
            d["betas"] = tuple(d["betas"])
        return cls(**d)

    def hash(self) -> str:
        import hashlib
        blob = json.dumps(self.to_dict(), sort_keys=True)
        return hashlib.sha256(blob.encode("utf-8")).hexdigest()[:16]


@dataclass
class StepRecord:
    epoch: int
    step: int
    lr: float
    loss: float


@dataclass
class TrainResult:
    model: MultiFramePoseNet
    optimizer: AdamW
    records: list
    checkpoints: list
    epoch: int

    @property
    def losses(self) -> list:
        return [r.loss for r in self.records]


def build_model(cfg: TrainConfig) -> MultiFramePoseNet:
    model_seed, _ = np.random.SeedSequence(cfg.seed).spawn(2)
    with default_dtype(cfg.dtype):
        return MultiFramePoseNet(cfg.model, np.random.default_rng(model_seed))


def data_rng(cfg: TrainConfig) -> np.random.Generator:
    _, data_seed = np.random.SeedSequence(cfg.seed).spawn(2)
    return np.random.default_rng(data_seed)


def batch_arrays(windows: list, heatmap_shape: tuple, sigma: float, dtype) -> tuple:
    """Stack windows into model input, targets and masks."""
    images = np.stack([w.images(dtype=dtype) for w in windows])
    stacks = [heatmap_target(w, heatmap_shape, sigma) for w in windows]
    targets = np.stack([s.maps for s in stacks]).astype(dtype)
    masks = np.stack([s.mask for s in stacks]).astype(dtype)
    return images, targets, masks, stacks


def _batches(n: int, size: int, rng: np.random.Generator) -> list:
    order = rng.permutation(n)
    out = [order[i:i + size] for i in range(0, n, size)]
    if out and len(out[-1]) < 2:   # batch norm cannot train on one sample
        out.pop()
    return out


def checkpoint_meta(cfg: TrainConfig, epoch: int, opt: AdamW, rng: np.random.Generator) -> dict:
    return {"kind": "checkpoint", "epoch": epoch, "adam_t": opt.t,
            "rng_state": rng.bit_generator.state, "config": cfg.to_dict(),
            "config_hash": cfg.model.hash(), "train_hash": cfg.hash()}


def save_checkpoint(path, cfg: TrainConfig, model: MultiFramePoseNet, opt: AdamW, epoch: int,
                    rng: np.random.Generator) -> Path:
    arrays = dict(model.state_dict())
    arrays.update(opt.state_arrays())
    serialize.save(path, arrays, checkpoint_meta(cfg, epoch, opt, rng))
    return Path(path)


def load_checkpoint(path) -> tuple[dict, dict]:
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"checkpoint not found: {path}")
    return serialize.load(path)


def _split_state(arrays: dict) -> tuple[dict, dict]:
    model_state = {k: v for k, v in arrays.items() if not k.startswith("adam.")}
    adam_state = {k: v for k, v in arrays.items() if k.startswith("adam.")}
    return model_state, adam_state


def train(cfg: TrainConfig, samples: list, out_dir=None, *, resume=None,
          progress: Callable[[str], None] | None = None, max_steps: int | None = None) -> TrainResult:
    """Run (or resume) training; checkpoint after every epoch when ``out_dir`` is set.

    ``max_steps`` stops early after that many optimizer steps (used for
    single-batch overfitting and smoke runs).
    """
    if not samples:
        raise UsageError("cannot train on an empty dataset")
    windows = [s.window if isinstance(s, Sample) else s for s in samples]
    model = build_model(cfg)
    opt = AdamW(model.named_parameters(), cfg.weight_decay, cfg.betas, cfg.eps)
    rng = data_rng(cfg)
    start = 0
    if resume is not None:
        arrays, meta = load_checkpoint(resume)
        if meta.get("train_hash") != cfg.hash():
            raise ConfigError(f"checkpoint {resume} was written by a different training configuration")
        model_state, adam_state = _split_state(arrays)
        model.load_state_dict(model_state)
        opt.load_state_arrays(adam_state, meta["adam_t"])
        rng.bit_generator.state = meta["rng_state"]
        start = int(meta["epoch"])
    out = Path(out_dir) if out_dir is not None else None
    checkpoints = []
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
        if resume is None:
            checkpoints.append(save_checkpoint(out / CHECKPOINT_PATTERN.format(0), cfg, model, opt, 0, rng))
    hm_shape = cfg.model.heatmap_size
    records: list[StepRecord] = []
    step = opt.t
    done = start
    with default_dtype(cfg.dtype):
        model.train()
        for epoch in range(start, cfg.epochs):
            lr = step_lr(epoch, cfg.lr, cfg.lr_step, cfg.lr_gamma)
            t0 = time.perf_counter()
            epoch_losses = []
            for idx in _batches(len(windows), cfg.batch_size, rng):
                batch = [augment(windows[i], rng) if cfg.augment else windows[i] for i in idx]
                images, targets, masks, _ = batch_arrays(batch, hm_shape, cfg.sigma, cfg.dtype)
                model.zero_grad()
                loss = mse_loss(model(Tensor(images)), targets, masks)
                value = loss.item()
                if not np.isfinite(value):
                    raise NumericError(f"loss became {value} at epoch {epoch}, step {step}, lr {lr:g}; "
                                       f"last gradient norm {global_norm(opt.grad_norms()):.4g}")
                loss.backward()
                opt.step(lr)
                step += 1
                records.append(StepRecord(epoch, step, lr, value))
                epoch_losses.append(value)
                if max_steps is not None and step >= max_steps:
                    break
            if progress is not None:
                progress(f"epoch {epoch} (of {cfg.epochs})  lr {lr:.6g}  loss {np.mean(epoch_losses):.6g}  "
                         f"({time.perf_counter() - t0:.1f}s)")
            done = epoch + 1
            if out is not None:
                checkpoints.append(save_checkpoint(out / CHECKPOINT_PATTERN.format(done), cfg, model,
                                                   opt, done, rng))
            if max_steps is not None and step >= max_steps:
                break
    if out is not None:
        write_loss_records(out / "loss.jsonl", records, append=resume is not None)
    return TrainResult(model, opt, records, checkpoints, done)


def overfit(cfg: TrainConfig, windows: list, steps: int) -> list:
    """Repeated steps on one fixed batch (no augmentation); returns the loss per step."""
    model = build_model(cfg)
    opt = AdamW(model.named_parameters(), cfg.weight_decay, cfg.betas, cfg.eps)
    losses = []
    with default_dtype(cfg.dtype):
        images, targets, masks, _ = batch_arrays(windows, cfg.model.heatmap_size, cfg.sigma, cfg.dtype)
        x = Tensor(images)
        model.train()
        for _ in range(steps):
            model.zero_grad()
            loss = mse_loss(model(x), targets, masks)
            loss.backward()
            opt.step(cfg.lr)
            losses.append(loss.item())
    return losses


def write_loss_records(path, records: list, append: bool = False) -> Path:
    path = Path(path)
    with open(path, "a" if append else "w") as fh:
        for r in records:
            fh.write(json.dumps(asdict(r)) + "\n")
    return path


def model_from_checkpoint(path, cfg: TrainConfig | None = None) -> tuple[MultiFramePoseNet, TrainConfig, dict]:
    """Rebuild the network stored in ``path``.

    With ``cfg`` given, its model hash must match the checkpoint's.
    """
    arrays, meta = load_checkpoint(path)
    stored = TrainConfig.from_dict(meta["config"])
    if cfg is not None and cfg.model.hash() != meta.get("config_hash"):
        raise ConfigError(f"configuration hash {cfg.model.hash()} does not match checkpoint "
                          f"{meta.get('config_hash')} ({path}); refusing to evaluate")
    cfg = cfg or stored
    model = build_model(cfg)
    model.load_state_dict(_split_state(arrays)[0])
    return model, cfg, meta


@dataclass
class Predictions:
    poses: list                     # image-space Pose per window
    heatmaps: np.ndarray            # (N, K, Hh, Wh)
    frame_weights: np.ndarray | None = None   # (N, 2T+1)
    attention: np.ndarray | None = None       # (N, heads, Hp*Wp, context tokens)


def predict(model: MultiFramePoseNet, windows: list, *, batch_size: int = 32, sigma: float = DEFAULT_SIGMA,
            keep_attention: bool = False) -> Predictions:
    """Eval-mode forward over windows, decoded back to image pixels."""
    cfg = model.cfg
    dtype = model.parameters()[0].dtype
    model.eval()
    poses, maps, weights, attn = [], [], [], []
    with no_grad(), default_dtype(dtype):
        for i in range(0, len(windows), batch_size):
            chunk = windows[i:i + batch_size]
            images = np.stack([w.images(dtype=dtype) for w in chunk])
            hm = model(Tensor(images)).data.astype(np.float64)
            maps.append(hm)
            if model.last_frame_weights is not None:
                weights.append(model.last_frame_weights.weights.data.astype(np.float64))
            if keep_attention and model.cross_attn is not None and model.cross_attn.attention_maps is not None:
                attn.append(np.asarray(model.cross_attn.attention_maps, dtype=np.float64))
            for w, h in zip(chunk, hm):
                stride = w.out_size[0] / h.shape[1]
                poses.append(decode_pose(HeatmapStack(h, stride, w.transform)))
    model.train()
    return Predictions(poses, np.concatenate(maps) if maps else np.zeros((0,)),
                       np.concatenate(weights) if weights else None,
                       np.concatenate(attn) if attn else None)


def evaluate(checkpoint, samples: list, cfg: TrainConfig | None = None, **kw) -> tuple[EvalReport, Predictions]:
    """Decode every window with the checkpointed model and score it against its GT."""
    model, cfg, _ = model_from_checkpoint(checkpoint, cfg)
    return evaluate_model(model, samples, sigma=cfg.sigma, **kw)


def evaluate_model(model: MultiFramePoseNet, samples: list, **kw) -> tuple[EvalReport, Predictions]:
    windows = [s.window if isinstance(s, Sample) else s for s in samples]
    preds = predict(model, windows, **kw)
    return report(preds.poses, [w.pose for w in windows]), preds


def evaluate_heatmaps(heatmaps, windows: list) -> EvalReport:
    """Score externally supplied heatmaps (e.g. the targets themselves)."""
    poses = []
    for w, h in zip(windows, heatmaps):
        stride = w.out_size[0] / np.shape(h)[1]
        poses.append(decode_pose(HeatmapStack(np.asarray(h), stride, w.transform)))
    return report(poses, [w.pose for w in windows])


def with_ablation(cfg: TrainConfig, names) -> TrainConfig:
    """Disable components by name: afw, msff, crossattn."""
    flags = {"afw": "use_afw", "msff": "use_msff", "crossattn": "use_cross_attention"}
    changes = {}
    for name in names:
        name = name.strip().lower().replace("-", "").replace("_", "")
        if not name:
            continue
        if name not in flags:
            raise ConfigError(f"unknown ablation {name!r}; choose from {sorted(flags)}")
        changes[flags[name]] = False
    return replace(cfg, model=replace(cfg.model, **changes))
