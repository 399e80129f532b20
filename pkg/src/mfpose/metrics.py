"""PCK@threshold, a single-person distance-rule AP, and grouped result tables.

The AP here is a simplified single-person protocol: each ground-truth joint has
exactly one prediction, a prediction is a true positive when it passes the PCK
distance rule, and predictions of one joint are ranked by confidence across the
whole dataset.  It is not comparable to multi-person benchmark mAP.
"""
from __future__ import annotations

import json
import logging
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from mfpose.codec import Pose
from mfpose.data.skeleton import GROUP_INDICES, GROUPS, INDEX, JOINTS, TORSO

log = logging.getLogger(__name__)

DEFAULT_THRESHOLD = 0.2
REPORT_SCHEMA = 1
COLUMNS = tuple(GROUPS) + ("Mean",)


def torso_length(pose: Pose) -> float:
    (s1, s2), (h1, h2) = TORSO
    mid_shoulder = (pose.xy[INDEX[s1]] + pose.xy[INDEX[s2]]) / 2
    mid_hip = (pose.xy[INDEX[h1]] + pose.xy[INDEX[h2]]) / 2
    return float(np.linalg.norm(mid_shoulder - mid_hip))


def joint_correct(pred: Pose, gt: Pose, threshold: float = DEFAULT_THRESHOLD,
                  torso: float | None = None) -> np.ndarray | None:
    """Per-joint distance test, boundary inclusive.  None if the torso is degenerate.

    Invisible ground-truth joints come back False; callers mask them with
    ``gt.visible``.
    """
    torso = torso_length(gt) if torso is None else torso
    if not torso > 0:
        log.warning("degenerate torso length %r; sample skipped", torso)
        return None
    dist = np.linalg.norm(pred.xy - gt.xy, axis=1)
    return (dist <= threshold * torso) & gt.visible


def pck(pred: Pose, gt: Pose, threshold: float = DEFAULT_THRESHOLD) -> np.ndarray | None:
    """Per-joint correctness of one sample (NaN where the GT joint is invisible)."""
    ok = joint_correct(pred, gt, threshold)
    if ok is None:
        return None
    return np.where(gt.visible, ok.astype(np.float64), np.nan)


def average_precision(confidences: np.ndarray, correct: np.ndarray) -> float:
    """Area under the monotone-interpolated precision/recall curve for one joint.

    Every entry is one prediction for one visible GT joint.  Recall counts
    retrieved correct predictions over all correct predictions (ranked
    retrieval), so random ranking with a fraction p correct scores about p.
    No correct prediction at all scores 0.  Ties in confidence keep input order.
    """
    confidences = np.asarray(confidences, dtype=np.float64)
    correct = np.asarray(correct, dtype=bool)
    n = len(correct)
    if n == 0:
        return float("nan")
    total = int(correct.sum())
    if total == 0:
        return 0.0
    order = np.argsort(-confidences, kind="stable")
    tp = np.cumsum(correct[order])
    precision = tp / np.arange(1, n + 1)
    recall = tp / total
    # precision envelope: max precision at any recall >= r
    envelope = np.maximum.accumulate(precision[::-1])[::-1]
    prev_recall = np.concatenate([[0.0], recall[:-1]])
    return float(np.sum((recall - prev_recall) * envelope))


@dataclass
class EvalReport:
    joints: list
    pck: list                 # per joint, NaN when no visible GT
    ap: list                  # per joint, NaN when no visible GT
    samples: int
    threshold: float = DEFAULT_THRESHOLD
    skipped: int = 0
    extra: dict = field(default_factory=dict)

    @property
    def mean_pck(self) -> float:
        return _nanmean(self.pck)

    @property
    def mean_ap(self) -> float:
        return _nanmean(self.ap)

    def group_values(self, values: list) -> dict:
        arr = np.asarray(values, dtype=np.float64)
        out = {g: _nanmean(arr[list(idx)]) for g, idx in GROUP_INDICES.items()}
        out["Mean"] = _nanmean(arr)
        return out

    def to_dict(self) -> dict:
        d = asdict(self)
        d["schema"] = REPORT_SCHEMA
        d["pck"] = [_jsonable(v) for v in self.pck]
        d["ap"] = [_jsonable(v) for v in self.ap]
        d["mean_pck"] = _jsonable(self.mean_pck)
        d["mean_ap"] = _jsonable(self.mean_ap)
        d["groups"] = [{"group": g, "pck": _jsonable(p), "ap": _jsonable(a)}
                       for (g, p), a in zip(self.group_values(self.pck).items(),
                                            self.group_values(self.ap).values())]
        return d

    def table(self, metric: str = "pck") -> str:
        values = self.group_values(self.pck if metric == "pck" else self.ap)
        width = max(len(c) for c in COLUMNS) + 2
        header = f"{metric.upper():<6}" + "".join(f"{c:>{width}}" for c in COLUMNS)
        row = f"{'':<6}" + "".join(f"{_fmt(values[c]):>{width}}" for c in COLUMNS)
        return header + "\n" + row

    def save(self, path) -> Path:
        path = Path(path)
        path.write_text(json.dumps(self.to_dict(), indent=1, sort_keys=True))
        return path


def _nanmean(values) -> float:
    arr = np.asarray(values, dtype=np.float64)
    arr = arr[~np.isnan(arr)]
    return float(arr.mean()) if arr.size else float("nan")


def _jsonable(v):
    return None if v is None or np.isnan(v) else float(v)


def _fmt(v: float) -> str:
    return "n/a" if np.isnan(v) else f"{100 * v:.1f}"


def report(preds: list, gts: list, threshold: float = DEFAULT_THRESHOLD, torsos: list | None = None) -> EvalReport:
    """Aggregate per-joint PCK and AP over a dataset of single-person samples.

    ``torsos`` overrides the per-sample torso length (default: measured on GT).
    """
    if len(preds) != len(gts):
        raise ValueError(f"{len(preds)} predictions for {len(gts)} ground truths")
    if not gts:
        raise ValueError("cannot report on an empty dataset")
    k = gts[0].num_joints
    correct, conf, vis = [], [], []
    skipped = 0
    for i, (p, g) in enumerate(zip(preds, gts)):
        ok = joint_correct(p, g, threshold, None if torsos is None else torsos[i])
        if ok is None:
            skipped += 1
            continue
        correct.append(ok)
        conf.append(p.confidence)
        vis.append(g.visible)
    if not correct:
        raise ValueError("every sample had a degenerate torso")
    correct, conf, vis = np.array(correct), np.array(conf), np.array(vis)
    pck_j, ap_j = [], []
    for j in range(k):
        m = vis[:, j]
        if not m.any():
            log.info("joint %s has no visible ground truth; excluded from means", _name(j, k))
            pck_j.append(float("nan"))
            ap_j.append(float("nan"))
            continue
        pck_j.append(float(correct[m, j].mean()))
        ap_j.append(average_precision(conf[m, j], correct[m, j]))
    names = list(JOINTS) if k == len(JOINTS) else [f"joint_{j}" for j in range(k)]
    return EvalReport(names, pck_j, ap_j, len(correct), threshold, skipped)


def _name(j: int, k: int) -> str:
    return JOINTS[j] if k == len(JOINTS) else f"joint_{j}"


def pck_curve(preds: list, gts: list, thresholds) -> np.ndarray:
    """Mean PCK at each threshold, for sweep plots."""
    return np.array([report(preds, gts, t).mean_pck for t in thresholds])


def random_guess_pck(gts: list, shape: tuple, transforms: list, rng: np.random.Generator,
                     threshold: float = DEFAULT_THRESHOLD, draws: int = 20) -> float:
    """PCK of predictions drawn uniformly over the crop, mapped back to image pixels.

    ``shape`` is the crop (H, W); ``transforms`` the per-sample image->crop affines.
    """
    from mfpose.codec import apply_affine, invert_affine
    h, w = shape
    scores = []
    for _ in range(draws):
        preds = []
        for g, t in zip(gts, transforms):
            uv = np.column_stack([rng.uniform(-0.5, w - 0.5, g.num_joints), rng.uniform(-0.5, h - 0.5, g.num_joints)])
            preds.append(Pose(apply_affine(invert_affine(t), uv), np.ones(g.num_joints, bool)))
        scores.append(report(preds, gts, threshold).mean_pck)
    return float(np.mean(scores))
