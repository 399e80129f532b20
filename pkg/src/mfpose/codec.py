"""Gaussian heatmap targets, peak decoding and the masked heatmap MSE.

Coordinate chain: image pixel --(crop affine)--> crop pixel --(/stride)-->
heatmap cell.  Pixel and cell centres sit on integer coordinates.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from mfpose.autograd.tensor import Tensor
from mfpose.errors import DimensionError

log = logging.getLogger(__name__)

DEFAULT_SIGMA = 2.0
IDENTITY = np.array([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0]])


def apply_affine(affine: np.ndarray, points: np.ndarray) -> np.ndarray:
    points = np.asarray(points, dtype=np.float64)
    return points @ affine[:, :2].T + affine[:, 2]


def invert_affine(affine: np.ndarray) -> np.ndarray:
    lin = np.linalg.inv(affine[:, :2])
    return np.hstack([lin, -(lin @ affine[:, 2])[:, None]])


def compose_affine(outer: np.ndarray, inner: np.ndarray) -> np.ndarray:
    """Affine equal to applying ``inner`` first, then ``outer``."""
    lin = outer[:, :2] @ inner[:, :2]
    return np.hstack([lin, (outer[:, :2] @ inner[:, 2] + outer[:, 2])[:, None]])


@dataclass
class Pose:
    xy: np.ndarray                                 # (K, 2) pixels, x then y
    visible: np.ndarray                            # (K,) bool
    confidence: np.ndarray | None = None           # (K,) in [0, 1]

    def __post_init__(self):
        self.xy = np.asarray(self.xy, dtype=np.float64).reshape(-1, 2)
        self.visible = np.asarray(self.visible, dtype=bool).reshape(-1)
        if self.confidence is None:
            self.confidence = self.visible.astype(np.float64)
        self.confidence = np.asarray(self.confidence, dtype=np.float64).reshape(-1)
        if not len(self.xy) == len(self.visible) == len(self.confidence):
            raise DimensionError("pose arrays disagree on joint count")

    @property
    def num_joints(self) -> int:
        return len(self.xy)

    def transformed(self, affine: np.ndarray) -> "Pose":
        return Pose(apply_affine(affine, self.xy), self.visible.copy(), self.confidence.copy())


@dataclass
class HeatmapStack:
    maps: np.ndarray                               # (K, Hh, Wh)
    stride: float = 1.0                            # crop pixels per heatmap cell
    transform: np.ndarray = field(default_factory=lambda: IDENTITY.copy())  # image -> crop
    mask: np.ndarray | None = None                 # (K,) 1 where the joint supervises

    def __post_init__(self):
        if self.mask is None:
            self.mask = np.ones(self.maps.shape[0])

    @property
    def shape(self) -> tuple:
        return self.maps.shape[1:]

    def image_to_cells(self, xy: np.ndarray) -> np.ndarray:
        return apply_affine(self.transform, xy) / self.stride

    def cells_to_image(self, uv: np.ndarray) -> np.ndarray:
        return apply_affine(invert_affine(self.transform), np.asarray(uv) * self.stride)


def gaussian_map(shape: tuple, cx: int, cy: int, sigma: float) -> np.ndarray:
    h, w = shape
    xs = np.arange(w) - cx
    ys = np.arange(h) - cy
    # separable: the 2-D exponent splits into an x and a y factor
    return np.outer(np.exp(-ys * ys / (2 * sigma ** 2)), np.exp(-xs * xs / (2 * sigma ** 2)))


def encode_target(pose: Pose, shape: tuple, sigma: float = DEFAULT_SIGMA, stride: float = 1.0,
                  transform: np.ndarray | None = None) -> HeatmapStack:
    """Unnormalised Gaussians with peak 1.0 at each visible joint's nearest cell.

    Invisible joints and joints whose cell falls outside the map get an all-zero
    map and mask 0.
    """
    transform = IDENTITY.copy() if transform is None else np.asarray(transform, dtype=np.float64)
    h, w = shape
    stack = HeatmapStack(np.zeros((pose.num_joints, h, w)), stride, transform, np.zeros(pose.num_joints))
    cells = stack.image_to_cells(pose.xy)
    for k, ((u, v), vis) in enumerate(zip(cells, pose.visible)):
        cx, cy = int(np.floor(u + 0.5)), int(np.floor(v + 0.5))
        if not vis or not (0 <= cx < w and 0 <= cy < h):
            continue
        stack.maps[k] = gaussian_map(shape, cx, cy, sigma)
        stack.mask[k] = 1.0
    return stack


def _peak(hm: np.ndarray) -> tuple[float, float, float, bool]:
    h, w = hm.shape
    lo, hi = hm.min(), hm.max()
    if lo == hi:
        # constant (incl. all-zero) map: no peak; report the center cell
        return float(w // 2), float(h // 2), float(np.clip(hi, 0.0, 1.0)), hi != 0
    idx = int(np.argmax(hm))                       # ties -> lowest flat index
    y, x = divmod(idx, w)
    u, v = float(x), float(y)
    if 0 < x < w - 1:
        u += 0.25 * np.sign(hm[y, x + 1] - hm[y, x - 1])
    if 0 < y < h - 1:
        v += 0.25 * np.sign(hm[y + 1, x] - hm[y - 1, x])
    return u, v, float(np.clip(hi, 0.0, 1.0)), True


def decode_cells(maps: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Peak cell (u, v) with quarter-cell refinement, confidence and visibility per map."""
    out = [_peak(hm) for hm in maps]
    uv = np.array([[u, v] for u, v, _, _ in out]).reshape(-1, 2)
    conf = np.array([c for _, _, c, _ in out])
    vis = np.array([f for _, _, _, f in out], dtype=bool)
    return uv, conf, vis


def decode_pose(stack: HeatmapStack) -> Pose:
    """Decode peaks back to image pixels through the inverse crop transform."""
    uv, conf, vis = decode_cells(stack.maps)
    return Pose(stack.cells_to_image(uv), vis, conf)


def mse_loss(pred: Tensor, target: np.ndarray, mask: np.ndarray) -> Tensor:
    """Mean squared error over supervised joints and all their cells.

    pred/target: (B, K, H, W); mask: (B, K) of 0/1.
    """
    target = np.asarray(target, dtype=pred.dtype)
    if pred.shape != target.shape:
        raise DimensionError(f"prediction {pred.shape} and target {target.shape} differ")
    mask = np.asarray(mask, dtype=pred.dtype).reshape(pred.shape[:2] + (1, 1))
    count = float(mask.sum()) * pred.shape[2] * pred.shape[3]
    if count == 0:
        log.warning("every joint is masked; loss is 0")
        return (pred * 0.0).sum()
    diff = (pred - target) * mask
    return (diff * diff).sum() * (1.0 / count)
