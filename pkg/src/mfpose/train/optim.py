"""AdamW with decoupled weight decay, and the step learning-rate schedule."""
from __future__ import annotations

import math

import numpy as np

from mfpose.errors import NumericError


def step_lr(epoch: int, lr0: float, step: int, gamma: float) -> float:
    """lr0 * gamma ** (epoch // step)."""
    if epoch < 0:
        raise ValueError(f"epoch must be >= 0, got {epoch}")
    return lr0 * gamma ** (epoch // step)


class AdamW:
    """Adam moments on named parameters; decay is applied to the weights directly.

    Per step, for every parameter: ``p -= lr * wd * p``, then the usual
    bias-corrected Adam update.  A missing gradient counts as zero.
    """

    def __init__(self, named_params, weight_decay: float = 0.0, betas=(0.9, 0.999), eps: float = 1e-8):
        self.params = dict(named_params)
        self.weight_decay = float(weight_decay)
        self.betas = tuple(float(b) for b in betas)
        self.eps = float(eps)
        self.t = 0
        self.m = {n: np.zeros_like(p.data) for n, p in self.params.items()}
        self.v = {n: np.zeros_like(p.data) for n, p in self.params.items()}

    def check_finite(self) -> None:
        for name, p in self.params.items():
            if p.grad is not None and not np.isfinite(p.grad).all():
                raise NumericError(f"non-finite gradient in parameter {name!r}")

    def step(self, lr: float) -> None:
        self.check_finite()   # before touching anything, so a bad step changes nothing
        b1, b2 = self.betas
        self.t += 1
        c1 = 1.0 - b1 ** self.t
        c2 = 1.0 - b2 ** self.t
        for name, p in self.params.items():
            g = np.zeros_like(p.data) if p.grad is None else p.grad
            m, v = self.m[name], self.v[name]
            if self.weight_decay:
                p.data *= 1.0 - lr * self.weight_decay
            m *= b1
            m += (1.0 - b1) * g
            v *= b2
            v += (1.0 - b2) * g * g
            p.data -= (lr / c1) * m / (np.sqrt(v / c2) + self.eps)

    def grad_norms(self) -> dict:
        return {n: (0.0 if p.grad is None else float(np.linalg.norm(p.grad))) for n, p in self.params.items()}

    def state_arrays(self) -> dict:
        out = {}
        for n in self.params:
            out[f"adam.m.{n}"] = self.m[n]
            out[f"adam.v.{n}"] = self.v[n]
        return out

    def load_state_arrays(self, arrays: dict, t: int) -> None:
        for n in self.params:
            self.m[n][...] = arrays[f"adam.m.{n}"]
            self.v[n][...] = arrays[f"adam.v.{n}"]
        self.t = int(t)


def global_norm(norms: dict) -> float:
    return math.sqrt(sum(v * v for v in norms.values()))
