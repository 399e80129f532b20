"""Windowed datasets built from synthetic videos, plus image-sequence export.

On-disk layout written by :func:`export_videos`::

    <root>/video_0000/frame_000.png ...
    <root>/video_0000/gt.json
    <root>/manifest.json

``gt.json`` (schema version 1) holds ``{"schema": 1, "video": i,
"torso_length": float, "frames": [{"index": t, "joints": [[x, y, visible],
...]}]}`` with x, y in image pixels (pixel centres on integers) and visible 0/1.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image

from mfpose.codec import DEFAULT_SIGMA, HeatmapStack, Pose, encode_target
from mfpose.data.synthetic import DatasetSpec, SyntheticVideo, generate_videos
from mfpose.data.windows import DEFAULT_DELTA, FrameWindow, extract_window
from mfpose.errors import ConfigError

GT_SCHEMA = 1


@dataclass
class Sample:
    window: FrameWindow
    target: HeatmapStack


def heatmap_target(window: FrameWindow, heatmap_shape: tuple, sigma: float = DEFAULT_SIGMA) -> HeatmapStack:
    stride = window.out_size[0] / heatmap_shape[0]
    return encode_target(window.pose, heatmap_shape, sigma=sigma, stride=stride, transform=window.transform)


def windows_from_videos(videos: list, radius: int = 2, delta: float = DEFAULT_DELTA,
                        out_size: tuple = (64, 48)) -> list[FrameWindow]:
    """Every centre frame of every video, ordered by (video, centre)."""
    return [extract_window(v, t, radius, delta, out_size, video_index=i)
            for i, v in enumerate(videos) for t in range(len(v))]


def make_dataset(spec: DatasetSpec, seed: int, *, radius: int = 2, delta: float = DEFAULT_DELTA,
                 out_size: tuple = (64, 48), heatmap_shape: tuple = (32, 24),
                 sigma: float = DEFAULT_SIGMA) -> list[Sample]:
    videos = generate_videos(spec, seed)
    return [Sample(w, heatmap_target(w, heatmap_shape, sigma))
            for w in windows_from_videos(videos, radius, delta, out_size)]


def _to_png(frame: np.ndarray) -> Image.Image:
    return Image.fromarray(np.round(np.clip(frame, 0, 1) * 255).astype(np.uint8))


def gt_record(video: SyntheticVideo, index: int) -> dict:
    return {
        "schema": GT_SCHEMA,
        "video": index,
        "torso_length": float(video.torso_length),
        "frames": [{"index": t, "joints": [[float(x), float(y), int(v)]
                                           for (x, y), v in zip(p.xy, p.visible)]}
                   for t, p in enumerate(video.poses)],
    }


def export_videos(videos: list, root, spec: DatasetSpec | None = None, seed: int | None = None) -> Path:
    root = Path(root)
    root.mkdir(parents=True, exist_ok=True)
    for i, video in enumerate(videos):
        folder = root / f"video_{i:04d}"
        folder.mkdir(exist_ok=True)
        for t, frame in enumerate(video.frames):
            _to_png(frame).save(folder / f"frame_{t:03d}.png")
        (folder / "gt.json").write_text(json.dumps(gt_record(video, i), indent=1, sort_keys=True))
    manifest = {"schema": GT_SCHEMA, "videos": len(videos),
                "frames": int(sum(len(v) for v in videos)),
                "joints": int(videos[0].poses[0].num_joints) if videos else 0,
                "seed": seed, "spec": spec.to_dict() if spec is not None else None}
    (root / "manifest.json").write_text(json.dumps(manifest, indent=1, sort_keys=True))
    return root


def load_videos(root) -> list[SyntheticVideo]:
    """Read back an exported directory; frames come back quantised to 8 bits."""
    root = Path(root)
    videos = []
    for folder in sorted(p for p in root.iterdir() if p.is_dir() and p.name.startswith("video_")):
        record = json.loads((folder / "gt.json").read_text())
        if record.get("schema") != GT_SCHEMA:
            raise ConfigError(f"{folder / 'gt.json'}: unsupported schema {record.get('schema')!r}")
        frames, poses = [], []
        for entry in record["frames"]:
            img = np.asarray(Image.open(folder / f"frame_{entry['index']:03d}.png"), dtype=np.float64) / 255.0
            frames.append(img[..., :3])
            arr = np.asarray(entry["joints"], dtype=np.float64)
            poses.append(Pose(arr[:, :2], arr[:, 2] > 0))
        videos.append(SyntheticVideo(frames, poses, record["torso_length"], np.zeros(len(frames), bool)))
    return videos
