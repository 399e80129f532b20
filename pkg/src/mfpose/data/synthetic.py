"""Procedural videos of a 2-D articulated figure.

Each video draws one figure whose joint angles follow sinusoids and whose root
drifts linearly; limbs are anti-aliased capsules.  Optional events: a moving
rectangular occluder (joints under it become invisible) and per-frame motion
blur.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np
from scipy.ndimage import uniform_filter1d

from mfpose.codec import Pose
from mfpose.data.skeleton import INDEX, JOINTS, LIMBS, NUM_JOINTS
from mfpose.errors import ConfigError


@dataclass(frozen=True)
class DatasetSpec:
    num_videos: int = 200
    frames_per_video: int = 10
    frame_h: int = 112
    frame_w: int = 112
    num_joints: int = NUM_JOINTS
    occlusion_prob: float = 0.2
    blur_prob: float = 0.1
    noise_std: float = 0.02
    motion_scale: float = 1.0

    def __post_init__(self):
        if self.num_joints != NUM_JOINTS:
            raise ConfigError(f"the synthetic skeleton has {NUM_JOINTS} joints, got num_joints={self.num_joints}")
        if self.num_videos < 0 or self.frames_per_video < 1:
            raise ConfigError("num_videos must be >= 0 and frames_per_video >= 1")
        if min(self.frame_h, self.frame_w) < 64:
            raise ConfigError("frames must be at least 64x64 pixels")
        for name in ("occlusion_prob", "blur_prob"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ConfigError(f"{name} must lie in [0, 1]")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class Occluder:
    x0: np.ndarray      # (frames,) left edge per frame
    y0: float
    w: float
    h: float
    active: np.ndarray  # (frames,) bool

    def covers(self, t: int, xy: np.ndarray) -> np.ndarray:
        if not self.active[t]:
            return np.zeros(len(xy), dtype=bool)
        x, y = xy[:, 0], xy[:, 1]
        return (x >= self.x0[t]) & (x <= self.x0[t] + self.w) & (y >= self.y0) & (y <= self.y0 + self.h)


@dataclass
class SyntheticVideo:
    frames: list            # (H, W, 3) float arrays in [0, 1]
    poses: list             # Pose per frame, image pixels
    torso_length: float
    blurred: np.ndarray     # (frames,) bool
    occluder: Occluder | None = None

    def __len__(self) -> int:
        return len(self.frames)

    @property
    def size(self) -> tuple[int, int]:
        h, w = self.frames[0].shape[:2]
        return h, w


def _unit(theta):
    return np.stack([np.cos(theta), np.sin(theta)], axis=-1)


def _wave(rng, n, t, base_lo, base_hi, amp_hi, motion):
    base = rng.uniform(base_lo, base_hi)
    amp = rng.uniform(0.0, amp_hi) * motion
    freq = rng.uniform(0.15, 0.5)
    phase = rng.uniform(0, 2 * np.pi)
    return base + amp * np.sin(freq * t + phase)


def _kinematics(rng: np.random.Generator, n: int, torso: float, motion: float) -> np.ndarray:
    """Joint trajectories (n, K, 2) around an origin pelvis."""
    t = np.arange(n, dtype=np.float64)
    joints = np.zeros((n, NUM_JOINTS, 2))
    up = _wave(rng, n, t, -np.pi / 2 - 0.25, -np.pi / 2 + 0.25, 0.12, motion)
    pelvis = np.zeros((n, 2))
    neck = pelvis + torso * _unit(up)
    head = neck + 0.45 * torso * _unit(up + _wave(rng, n, t, -0.3, 0.3, 0.2, motion))
    side = _unit(up + np.pi / 2)   # points to the figure's left (image right)
    r_sh, l_sh = neck - 0.4 * torso * side, neck + 0.4 * torso * side
    r_hip, l_hip = pelvis - 0.25 * torso * side, pelvis + 0.25 * torso * side
    down = up + np.pi

    def chain(root, out_sign, upper, lower, spread, bend_hi, amp):
        a1 = down + out_sign * _wave(rng, n, t, -0.2, spread, amp, motion)
        a2 = a1 + out_sign * _wave(rng, n, t, 0.0, bend_hi, amp, motion)
        mid = root + upper * torso * _unit(a1)
        return mid, mid + lower * torso * _unit(a2)

    r_el, r_wr = chain(r_sh, 1.0, 0.75, 0.7, 2.2, 2.0, 1.0)
    l_el, l_wr = chain(l_sh, -1.0, 0.75, 0.7, 2.2, 2.0, 1.0)
    r_kn, r_an = chain(r_hip, 1.0, 0.8, 0.75, 0.6, 1.2, 0.5)
    l_kn, l_an = chain(l_hip, -1.0, 0.8, 0.75, 0.6, 1.2, 0.5)
    named = dict(head=head, neck=neck, r_shoulder=r_sh, l_shoulder=l_sh, r_elbow=r_el,
                 l_elbow=l_el, r_wrist=r_wr, l_wrist=l_wr, pelvis=pelvis, r_hip=r_hip,
                 l_hip=l_hip, r_knee=r_kn, l_knee=l_kn, r_ankle=r_an, l_ankle=l_an)
    for name, xy in named.items():
        joints[:, INDEX[name]] = xy
    return joints


def _fit_into_frame(joints: np.ndarray, h: int, w: int, margin: float) -> np.ndarray:
    lo = joints.reshape(-1, 2).min(axis=0)
    hi = joints.reshape(-1, 2).max(axis=0)
    room = np.array([w, h], dtype=np.float64) - 2 * margin
    extent = hi - lo
    scale = min(1.0, float(np.min(room / np.maximum(extent, 1e-9))))
    centre = (lo + hi) / 2
    joints = (joints - centre) * scale + np.array([w, h]) / 2
    return joints


def _background(rng: np.random.Generator, h: int, w: int) -> np.ndarray:
    c0 = rng.uniform(0.05, 0.35, size=3)
    c1 = rng.uniform(0.05, 0.35, size=3)
    ramp = np.linspace(0.0, 1.0, w)[None, :, None] if rng.random() < 0.5 else np.linspace(0.0, 1.0, h)[:, None, None]
    bg = c0 + (c1 - c0) * ramp
    blobs = uniform_filter1d(uniform_filter1d(rng.normal(0, 0.15, (h, w)), 9, axis=0), 9, axis=1)
    return np.clip(np.broadcast_to(bg, (h, w, 3)) + blobs[..., None], 0.0, 1.0)


def _draw_capsule(img: np.ndarray, p: np.ndarray, q: np.ndarray, radius: float, color) -> None:
    h, w = img.shape[:2]
    x0 = int(max(np.floor(min(p[0], q[0]) - radius - 1), 0))
    x1 = int(min(np.ceil(max(p[0], q[0]) + radius + 2), w))
    y0 = int(max(np.floor(min(p[1], q[1]) - radius - 1), 0))
    y1 = int(min(np.ceil(max(p[1], q[1]) + radius + 2), h))
    if x0 >= x1 or y0 >= y1:
        return
    ys, xs = np.mgrid[y0:y1, x0:x1].astype(np.float64)
    d = q - p
    denom = float(d @ d)
    s = np.zeros_like(xs) if denom == 0 else np.clip(((xs - p[0]) * d[0] + (ys - p[1]) * d[1]) / denom, 0, 1)
    dist = np.hypot(xs - (p[0] + s * d[0]), ys - (p[1] + s * d[1]))
    alpha = np.clip(radius + 0.5 - dist, 0.0, 1.0)[..., None]
    patch = img[y0:y1, x0:x1]
    img[y0:y1, x0:x1] = patch * (1 - alpha) + np.asarray(color) * alpha


def render_figure(img: np.ndarray, joints: np.ndarray, torso: float) -> None:
    radius = max(1.2, 0.13 * torso)
    for a, b, color in LIMBS:
        _draw_capsule(img, joints[INDEX[a]], joints[INDEX[b]], radius, color)
    head = joints[INDEX["head"]]
    _draw_capsule(img, head, head, 0.28 * torso, LIMBS[-1][2])
    for j in ("r_elbow", "l_elbow", "r_knee", "l_knee", "r_wrist", "l_wrist", "r_ankle", "l_ankle"):
        _draw_capsule(img, joints[INDEX[j]], joints[INDEX[j]], radius * 0.8, (0.98, 0.98, 0.98))


def _make_occluder(rng: np.random.Generator, joints: np.ndarray, n: int) -> Occluder:
    lo = joints.reshape(-1, 2).min(axis=0)
    hi = joints.reshape(-1, 2).max(axis=0)
    ext = hi - lo
    w = rng.uniform(0.25, 0.5) * ext[0] + 6
    h = rng.uniform(0.25, 0.45) * ext[1]
    y0 = rng.uniform(lo[1], hi[1] - h)
    start_x = rng.uniform(lo[0] - w, hi[0])
    speed = rng.uniform(-2.0, 2.0)
    x0 = start_x + speed * np.arange(n)
    active = np.zeros(n, dtype=bool)
    first = int(rng.integers(0, n))
    length = int(rng.integers(max(1, n // 3), n + 1))
    active[first:first + length] = True
    return Occluder(x0, float(y0), float(w), float(h), active)


def generate_video(spec: DatasetSpec, rng: np.random.Generator) -> SyntheticVideo:
    n, h, w = spec.frames_per_video, spec.frame_h, spec.frame_w
    torso = rng.uniform(0.14, 0.19) * min(h, w)
    joints = _kinematics(rng, n, torso, spec.motion_scale)
    drift = rng.uniform(-0.8, 0.8, size=2) * spec.motion_scale
    sway = rng.uniform(0, 3.0, size=2) * spec.motion_scale
    t = np.arange(n)[:, None]
    root = drift * t + sway * np.sin(0.3 * t + rng.uniform(0, 2 * np.pi, size=2))
    joints = joints + root[:, None, :]
    joints = _fit_into_frame(joints, h, w, margin=0.08 * min(h, w))
    lo = joints.reshape(-1, 2).min(axis=0)
    hi = joints.reshape(-1, 2).max(axis=0)
    fitted_torso = float(np.linalg.norm(joints[0, INDEX["neck"]] - joints[0, INDEX["pelvis"]]))

    bg = _background(rng, h, w)
    occluder = _make_occluder(rng, joints, n) if rng.random() < spec.occlusion_prob else None
    blurred = rng.random(n) < spec.blur_prob
    occ_shade = rng.uniform(0.3, 0.7)
    frames, poses = [], []
    for i in range(n):
        img = bg.copy()
        render_figure(img, joints[i], fitted_torso)
        visible = np.ones(NUM_JOINTS, dtype=bool)
        if occluder is not None and occluder.active[i]:
            ox0 = int(max(np.floor(occluder.x0[i]), 0))
            ox1 = int(min(np.ceil(occluder.x0[i] + occluder.w), w))
            oy0 = int(max(np.floor(occluder.y0), 0))
            oy1 = int(min(np.ceil(occluder.y0 + occluder.h), h))
            if ox0 < ox1 and oy0 < oy1:
                img[oy0:oy1, ox0:ox1] = occ_shade
            visible &= ~occluder.covers(i, joints[i])
        if blurred[i]:
            size = int(rng.integers(5, 12))
            img = uniform_filter1d(img, size, axis=int(rng.integers(0, 2)))
        if spec.noise_std > 0:
            img = img + rng.normal(0.0, spec.noise_std, img.shape)
        frames.append(np.clip(img, 0.0, 1.0))
        poses.append(Pose(joints[i].copy(), visible))
    assert (lo >= 0).all() and (hi[0] <= w) and (hi[1] <= h)
    return SyntheticVideo(frames, poses, fitted_torso, blurred, occluder)


def generate_videos(spec: DatasetSpec, seed: int) -> list[SyntheticVideo]:
    """One independent child stream per video, so video i never depends on the count."""
    children = np.random.SeedSequence(seed).spawn(spec.num_videos)
    return [generate_video(spec, np.random.default_rng(s)) for s in children]


__all__ = ["DatasetSpec", "Occluder", "SyntheticVideo", "generate_video", "generate_videos",
           "render_figure", "JOINTS"]
