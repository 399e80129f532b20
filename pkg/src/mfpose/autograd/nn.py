"""Minimal module system: parameters, buffers, and the standard layers."""
from __future__ import annotations

from collections import OrderedDict
from typing import Iterator

import numpy as np

from mfpose.autograd import functional as F
from mfpose.autograd.tensor import Tensor, get_default_dtype
from mfpose.errors import DimensionError


class Parameter(Tensor):
    """A leaf tensor that always participates in the gradient tape."""

    __slots__ = ()

    def __init__(self, data):
        super().__init__(data, requires_grad=True)


def trunc_normal(rng: np.random.Generator, shape, std: float = 0.02) -> np.ndarray:
    """Normal samples redrawn until they fall within two standard deviations."""
    out = rng.standard_normal(shape)
    bad = np.abs(out) > 2.0
    while bad.any():
        out[bad] = rng.standard_normal(int(bad.sum()))
        bad = np.abs(out) > 2.0
    return out * std


def he_normal(rng: np.random.Generator, shape, fan_in: int) -> np.ndarray:
    return rng.standard_normal(shape) * np.sqrt(2.0 / fan_in)


class Module:
    """Base class. Parameters, buffers and submodules are discovered from attributes.

    Buffers are numpy arrays whose attribute names a subclass lists in
    ``_buffers``; they are saved with the parameters but never receive gradients.
    """

    _buffers: tuple = ()
    training: bool = True

    def __call__(self, *args, **kwargs):
        return self.forward(*args, **kwargs)

    def forward(self, *args, **kwargs):
        raise NotImplementedError

    def _children(self) -> Iterator[tuple[str, "Module"]]:
        for name, value in vars(self).items():
            if isinstance(value, Module):
                yield name, value
            elif isinstance(value, (list, tuple)) and value and all(isinstance(v, Module) for v in value):
                for i, child in enumerate(value):
                    yield f"{name}.{i}", child

    def named_modules(self, prefix: str = "") -> Iterator[tuple[str, "Module"]]:
        yield prefix, self
        for name, child in self._children():
            yield from child.named_modules(f"{prefix}.{name}" if prefix else name)

    def named_parameters(self, prefix: str = "") -> Iterator[tuple[str, Parameter]]:
        for mod_name, module in self.named_modules(prefix):
            for name, value in vars(module).items():
                if isinstance(value, Parameter):
                    yield (f"{mod_name}.{name}" if mod_name else name), value

    def parameters(self) -> list[Parameter]:
        return [p for _, p in self.named_parameters()]

    def named_buffers(self, prefix: str = "") -> Iterator[tuple[str, np.ndarray]]:
        for mod_name, module in self.named_modules(prefix):
            for name in module._buffers:
                yield (f"{mod_name}.{name}" if mod_name else name), getattr(module, name)

    def train(self, mode: bool = True) -> "Module":
        for _, module in self.named_modules():
            module.training = mode
        return self

    def eval(self) -> "Module":
        return self.train(False)

    def zero_grad(self) -> None:
        for p in self.parameters():
            p.grad = None

    def num_parameters(self) -> int:
        return sum(p.size for p in self.parameters())

    def state_dict(self) -> "OrderedDict[str, np.ndarray]":
        state = OrderedDict()
        for name, p in self.named_parameters():
            state[name] = p.data.copy()
        for name, buf in self.named_buffers():
            state[name] = buf.copy()
        return state

    def load_state_dict(self, state: dict) -> None:
        """Copy arrays into existing storage; names and shapes must match exactly."""
        targets = {name: p.data for name, p in self.named_parameters()}
        targets.update(dict(self.named_buffers()))
        missing = sorted(set(targets) - set(state))
        unexpected = sorted(set(state) - set(targets))
        if missing or unexpected:
            raise KeyError(f"state mismatch: missing={missing} unexpected={unexpected}")
        for name, dest in targets.items():
            src = np.asarray(state[name])
            if src.shape != dest.shape:
                raise DimensionError(f"{name}: expected shape {dest.shape}, got {src.shape}")
            dest[...] = src


class Linear(Module):
    """Affine map over the last axis. ``std=None`` means 1/sqrt(in_features)."""

    def __init__(self, in_features: int, out_features: int, rng: np.random.Generator,
                 bias: bool = True, std: float | None = None):
        if std is None:
            std = 1.0 / np.sqrt(in_features)
        self.weight = Parameter(trunc_normal(rng, (out_features, in_features), std))
        self.bias = Parameter(np.zeros(out_features)) if bias else None

    def forward(self, x: Tensor) -> Tensor:
        return F.linear(x, self.weight, self.bias)


class Conv2d(Module):
    def __init__(self, in_channels: int, out_channels: int, kernel_size: int,
                 rng: np.random.Generator, stride: int = 1, padding: int = 0, bias: bool = True):
        shape = (out_channels, in_channels, kernel_size, kernel_size)
        self.weight = Parameter(he_normal(rng, shape, in_channels * kernel_size ** 2))
        self.bias = Parameter(np.zeros(out_channels)) if bias else None
        self.stride = stride
        self.padding = padding

    def forward(self, x: Tensor) -> Tensor:
        return F.conv2d(x, self.weight, self.bias, self.stride, self.padding)


class ConvTranspose2d(Module):
    """Stride-2 upsampling by default (kernel 4, padding 1 doubles H and W)."""

    def __init__(self, in_channels: int, out_channels: int, rng: np.random.Generator,
                 kernel_size: int = 4, stride: int = 2, padding: int = 1,
                 output_padding: int = 0, bias: bool = True):
        shape = (in_channels, out_channels, kernel_size, kernel_size)
        fan_in = in_channels * kernel_size ** 2 // stride ** 2
        self.weight = Parameter(he_normal(rng, shape, max(fan_in, 1)))
        self.bias = Parameter(np.zeros(out_channels)) if bias else None
        self.stride = stride
        self.padding = padding
        self.output_padding = output_padding

    def forward(self, x: Tensor) -> Tensor:
        return F.deconv2d(x, self.weight, self.bias, self.stride, self.padding,
                          self.output_padding)


class BatchNorm2d(Module):
    _buffers = ("running_mean", "running_var")

    def __init__(self, channels: int, momentum: float = 0.1, eps: float = 1e-5):
        dtype = get_default_dtype()
        self.weight = Parameter(np.ones(channels))
        self.bias = Parameter(np.zeros(channels))
        self.running_mean = np.zeros(channels, dtype=dtype)
        self.running_var = np.ones(channels, dtype=dtype)
        self.momentum = momentum
        self.eps = eps

    def forward(self, x: Tensor) -> Tensor:
        return F.batch_norm2d(x, self.weight, self.bias, self.running_mean, self.running_var,
                              self.training, self.momentum, self.eps)


class LayerNorm(Module):
    def __init__(self, dim: int, eps: float = 1e-6):
        self.weight = Parameter(np.ones(dim))
        self.bias = Parameter(np.zeros(dim))
        self.eps = eps

    def forward(self, x: Tensor) -> Tensor:
        return F.layer_norm(x, self.weight, self.bias, self.eps)


class MultiheadAttention(Module):
    """Multi-head attention with separate Q/K/V projections and an output projection.

    After each call ``last_weights`` holds the attention weights as a numpy
    array of shape (B, heads, queries, keys).
    """

    def __init__(self, dim: int, heads: int, rng: np.random.Generator, std: float | None = None):
        if dim % heads:
            raise DimensionError(f"width {dim} not divisible by {heads} heads")
        self.dim = dim
        self.heads = heads
        self.q_proj = Linear(dim, dim, rng, std=std)
        self.k_proj = Linear(dim, dim, rng, std=std)
        self.v_proj = Linear(dim, dim, rng, std=std)
        self.out_proj = Linear(dim, dim, rng, std=std)
        self.last_weights: np.ndarray | None = None

    def _split(self, x: Tensor) -> Tensor:
        b, n, _ = x.shape
        return x.reshape(b, n, self.heads, self.dim // self.heads).transpose(0, 2, 1, 3)

    def forward(self, query: Tensor, key: Tensor | None = None, value: Tensor | None = None) -> Tensor:
        key = query if key is None else key
        value = key if value is None else value
        if query.ndim != 3 or key.ndim != 3 or query.shape[-1] != self.dim or key.shape[-1] != self.dim:
            raise DimensionError(f"attention expects (B, N, {self.dim}) tokens, "
                                 f"got query {query.shape}, key {key.shape}")
        q = self._split(self.q_proj(query))
        k = self._split(self.k_proj(key))
        v = self._split(self.v_proj(value))
        out, weights = F.scaled_dot_product_attention(q, k, v)
        self.last_weights = weights.data
        b, _, n, _ = out.shape
        out = out.transpose(0, 2, 1, 3).reshape(b, n, self.dim)
        return self.out_proj(out)
