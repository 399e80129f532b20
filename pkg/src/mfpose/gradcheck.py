"""Central finite-difference gradient checking.

The relative error of one coordinate is ``|a - n| / max(|a|, |n|, floor)``
where ``a`` is the analytic and ``n`` the numerical derivative.  The floor is
``floor_ratio * max(1, max |a|)`` over every tensor in the check.  Central
differences at h=1e-6 carry absolute round-off of a few 1e-9 (the test losses
sum thousands of terms), so coordinates far below the largest gradient, and
those whose true derivative is exactly zero (key biases under softmax, conv
biases feeding batch norm), are judged against that scale instead of their own.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Mapping

import numpy as np

from mfpose.autograd.tensor import Tensor, no_grad

DEFAULT_H = 1e-6
FLOOR_RATIO = 1e-4
TOLERANCE = 1e-4


@dataclass
class GradCheckResult:
    per_tensor: dict = field(default_factory=dict)   # name -> max rel err
    per_group: dict = field(default_factory=dict)    # group -> max rel err
    coords_checked: int = 0
    floor: float = 0.0

    @property
    def max_error(self) -> float:
        return max(self.per_tensor.values(), default=0.0)

    def failures(self, tol: float = TOLERANCE) -> list[str]:
        return sorted(g for g, err in self.per_group.items() if not err < tol)

    def passed(self, tol: float = TOLERANCE) -> bool:
        return not self.failures(tol)


def relative_error(analytic: np.ndarray, numeric: np.ndarray, floor: float = 0.0) -> np.ndarray:
    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), floor)
    return np.abs(analytic - numeric) / denom


def _coords(shape: tuple, rng: np.random.Generator | None, max_coords: int | None) -> list[tuple]:
    total = int(np.prod(shape))
    if max_coords is None or total <= max_coords:
        flat = np.arange(total)
    else:
        flat = np.sort(rng.choice(total, size=max_coords, replace=False))
    return [np.unravel_index(i, shape) for i in flat]


def check_gradients(loss_fn: Callable[[], Tensor], tensors: Mapping[str, Tensor], *,
                    groups: Callable[[str], str] | None = None,
                    rng: np.random.Generator | None = None, max_coords: int | None = None,
                    h: float = DEFAULT_H, floor_ratio: float = FLOOR_RATIO,
                    corrupt: Callable[[str], bool] | None = None) -> GradCheckResult:
    """Compare backprop gradients of ``loss_fn()`` with central differences.

    ``loss_fn`` must be a deterministic function of the tensors' data.  When
    ``max_coords`` is set, that many coordinates per tensor are sampled with
    ``rng``.  ``corrupt(name)`` is a test hook: analytic gradients of matching
    tensors are scaled by 1.01 before comparison.
    """
    groups = groups or (lambda name: name)
    rng = rng or np.random.default_rng(0)
    for t in tensors.values():
        t.grad = None
    loss = loss_fn()
    loss.backward()
    analytic = {name: (np.zeros_like(t.data) if t.grad is None else t.grad.copy())
                for name, t in tensors.items()}
    for t in tensors.values():
        t.grad = None
    scale = max([1.0] + [float(np.abs(a).max()) for a in analytic.values() if a.size])
    floor = floor_ratio * scale

    result = GradCheckResult(floor=floor)
    with no_grad():
        for name, t in tensors.items():
            grad = analytic[name] * (1.01 if corrupt is not None and corrupt(name) else 1.0)
            worst = 0.0
            for idx in _coords(t.shape, rng, max_coords):
                original = t.data[idx]
                t.data[idx] = original + h
                plus = loss_fn().item()
                t.data[idx] = original - h
                minus = loss_fn().item()
                t.data[idx] = original
                numeric = (plus - minus) / (2.0 * h)
                err = float(relative_error(np.asarray(grad[idx]), np.asarray(numeric), floor))
                worst = max(worst, err)
                result.coords_checked += 1
            result.per_tensor[name] = worst
            group = groups(name)
            result.per_group[group] = max(result.per_group.get(group, 0.0), worst)
    return result
