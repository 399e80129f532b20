"""Temporal windows, box enlargement, cropping and shared-transform augmentation.

Boxes are (cx, cy, w, h) in continuous image coordinates where pixel centres
sit on integers.  A crop transform is a 2x3 affine from image pixels to crop
pixels; every frame of a window is resampled through the same one.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, replace

import numpy as np
from scipy.ndimage import map_coordinates

from mfpose.codec import Pose, apply_affine, compose_affine, invert_affine
from mfpose.errors import UsageError

log = logging.getLogger(__name__)

DEFAULT_DELTA = 1.25
MAX_ROTATION = 45.0
SCALE_RANGE = (0.65, 1.35)
HALF_BODY_PROB = 0.3
HALF_BODY_JOINTS = 8
MAX_RETRIES = 10
NORM_MEAN = 0.5
NORM_STD = 0.25


def enlarge_bbox(box, delta: float) -> tuple:
    """Scale width and height by ``delta`` about the box centre."""
    cx, cy, w, h = (float(v) for v in box)
    if w <= 0 or h <= 0:
        raise UsageError(f"box must have positive size, got w={w}, h={h}")
    if delta < 1:
        raise UsageError(f"enlargement factor must be >= 1, got {delta}")
    return (cx, cy, w * delta, h * delta)


def clip_bbox(box, width: int, height: int) -> tuple[tuple, bool]:
    """Intersect a box with the image extent [-0.5, W-0.5] x [-0.5, H-0.5]."""
    cx, cy, w, h = box
    x0, x1 = max(cx - w / 2, -0.5), min(cx + w / 2, width - 0.5)
    y0, y1 = max(cy - h / 2, -0.5), min(cy + h / 2, height - 0.5)
    if x1 <= x0 or y1 <= y0:
        raise UsageError("box lies entirely outside the image")
    clipped = (x0 + x1) / 2, (y0 + y1) / 2, x1 - x0, y1 - y0
    changed = not np.allclose(clipped, box, rtol=0, atol=1e-12)
    return clipped, changed


def fix_aspect(box, aspect: float) -> tuple:
    """Grow the short side so that w / h == aspect."""
    cx, cy, w, h = box
    if w > aspect * h:
        h = w / aspect
    else:
        w = h * aspect
    return (cx, cy, w, h)


def pose_bbox(pose: Pose, pad: float = 0.0, joints=None) -> tuple:
    xy = pose.xy if joints is None else pose.xy[list(joints)]
    lo, hi = xy.min(axis=0) - pad, xy.max(axis=0) + pad
    return ((lo[0] + hi[0]) / 2, (lo[1] + hi[1]) / 2, max(hi[0] - lo[0], 1e-6), max(hi[1] - lo[1], 1e-6))


def crop_transform(box, out_h: int, out_w: int) -> np.ndarray:
    """Affine mapping ``box`` onto an out_h x out_w crop with one uniform scale.

    The box edges map to the crop's pixel edges (-0.5 and out-0.5); the short
    dimension is letterboxed about the centre.
    """
    cx, cy, w, h = box
    s = min(out_w / w, out_h / h)
    return np.array([[s, 0.0, out_w / 2 - 0.5 - s * cx],
                     [0.0, s, out_h / 2 - 0.5 - s * cy]])


def warp(image: np.ndarray, transform: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Bilinear resample of an (H, W, 3) image into (3, out_h, out_w); outside is 0."""
    inv = invert_affine(transform)
    ys, xs = np.mgrid[0:out_h, 0:out_w].astype(np.float64)
    src_x = inv[0, 0] * xs + inv[0, 1] * ys + inv[0, 2]
    src_y = inv[1, 0] * xs + inv[1, 1] * ys + inv[1, 2]
    coords = np.stack([src_y, src_x])
    return np.stack([map_coordinates(image[..., c], coords, order=1, mode="constant", cval=0.0)
                     for c in range(image.shape[2])])


@dataclass
class FrameWindow:
    """2T+1 frames around ``center`` sharing one crop transform."""
    video_index: int
    center: int
    indices: tuple               # source frame index per window slot, clamped
    sources: list                # the source (H, W, 3) images, not copied
    box: tuple                   # centre-frame box b_t
    enlarged: tuple              # b-hat_t after enlargement and clipping
    clipped: bool
    transform: np.ndarray        # image pixels -> crop pixels
    pose: Pose                   # centre-frame ground truth, image pixels
    out_size: tuple = (64, 48)   # (H, W)
    torso_length: float = 0.0

    def __len__(self) -> int:
        return len(self.indices)

    @property
    def temporal_radius(self) -> int:
        return (len(self.indices) - 1) // 2

    def crop_pose(self) -> Pose:
        return self.pose.transformed(self.transform)

    def images(self, normalize: bool = True, dtype=np.float64) -> np.ndarray:
        """(2T+1, 3, H, W) crops; repeated source frames are rendered once."""
        h, w = self.out_size
        cache = {}
        out = np.empty((len(self.indices), 3, h, w), dtype=dtype)
        for slot, idx in enumerate(self.indices):
            if idx not in cache:
                cache[idx] = warp(self.sources[slot], self.transform, h, w)
            out[slot] = cache[idx]
        if normalize:
            out = (out - NORM_MEAN) / NORM_STD
        return out


def window_indices(t: int, radius: int, length: int) -> tuple:
    return tuple(int(min(max(t + k, 0), length - 1)) for k in range(-radius, radius + 1))


def extract_window(video, t: int, radius: int = 2, delta: float = DEFAULT_DELTA,
                   out_size: tuple = (64, 48), video_index: int = 0) -> FrameWindow:
    """Crop frames t-radius..t+radius (clamped) with the centre frame's enlarged box."""
    n = len(video.frames)
    if n == 0:
        raise UsageError("cannot window an empty video")
    if not 0 <= t < n:
        raise UsageError(f"centre index {t} outside video of length {n}")
    indices = window_indices(t, radius, n)
    pose = video.poses[t]
    height, width = video.frames[0].shape[:2]
    out_h, out_w = out_size
    box = pose_bbox(pose, pad=0.2 * video.torso_length)
    enlarged, clipped = clip_bbox(enlarge_bbox(fix_aspect(box, out_w / out_h), delta), width, height)
    return FrameWindow(video_index, t, indices, [video.frames[i] for i in indices], box, enlarged,
                       clipped, crop_transform(enlarged, out_h, out_w), pose, tuple(out_size),
                       float(video.torso_length))


def visible_in_crop(window: FrameWindow) -> np.ndarray:
    h, w = window.out_size
    xy = window.crop_pose().xy
    inside = (xy[:, 0] >= -0.5) & (xy[:, 0] <= w - 0.5) & (xy[:, 1] >= -0.5) & (xy[:, 1] <= h - 0.5)
    return inside & window.pose.visible


def rotate_scale(out_size: tuple, degrees: float, scale: float) -> np.ndarray:
    """Affine in crop space: rotate by ``degrees`` and zoom by ``scale`` about the crop centre."""
    h, w = out_size
    c = np.array([(w - 1) / 2, (h - 1) / 2])
    th = np.deg2rad(degrees)
    lin = scale * np.array([[np.cos(th), -np.sin(th)], [np.sin(th), np.cos(th)]])
    return np.hstack([lin, (c - lin @ c)[:, None]])


def half_body_box(window: FrameWindow, rng: np.random.Generator, delta: float = DEFAULT_DELTA):
    """Box around a random contiguous run of visible joints, or None if too few are visible."""
    k = window.pose.num_joints
    need = min(HALF_BODY_JOINTS, k - 1)
    length = int(rng.integers(need, k))
    start = int(rng.integers(0, k - length + 1))
    chosen = [j for j in range(start, start + length) if window.pose.visible[j]]
    if len(chosen) < need:
        return None
    out_h, out_w = window.out_size
    box = pose_bbox(window.pose, pad=0.2 * window.torso_length, joints=chosen)
    return enlarge_bbox(fix_aspect(box, out_w / out_h), delta)


def augment(window: FrameWindow, rng: np.random.Generator, *, max_rotation: float = MAX_ROTATION,
            scale_range: tuple = SCALE_RANGE, half_body_prob: float = HALF_BODY_PROB) -> FrameWindow:
    """One random rotation/scale (and optional half-body recrop) shared by every frame.

    Draws that leave no visible joint inside the crop are redrawn up to
    MAX_RETRIES times; after that the window is returned unchanged.
    """
    out_h, out_w = window.out_size
    for _ in range(MAX_RETRIES):
        base = window.transform
        if half_body_prob > 0 and rng.random() < half_body_prob:
            hb = half_body_box(window, rng)
            if hb is not None:
                base = crop_transform(hb, out_h, out_w)
        degrees = rng.uniform(-max_rotation, max_rotation)
        scale = rng.uniform(*scale_range)
        candidate = replace(window, transform=compose_affine(rotate_scale(window.out_size, degrees, scale), base))
        if visible_in_crop(candidate).any():
            return candidate
    log.warning("augmentation kept losing every joint; using the unaugmented window")
    return window


def transform_consistent(window: FrameWindow, atol: float = 1e-9) -> bool:
    """GT survives image -> crop -> image through the stored transform."""
    back = apply_affine(invert_affine(window.transform), window.crop_pose().xy)
    return bool(np.allclose(back, window.pose.xy, rtol=0, atol=atol))
