import json
import logging

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mfpose.codec import Pose
from mfpose.data.skeleton import GROUP_INDICES, INDEX, NUM_JOINTS
from mfpose.metrics import (COLUMNS, EvalReport, average_precision, joint_correct, pck, pck_curve, report,
                            torso_length)


def _pose(rng, torso=20.0):
    xy = rng.uniform(0, 100, (NUM_JOINTS, 2))
    xy[INDEX["r_shoulder"]], xy[INDEX["l_shoulder"]] = (40, 30), (60, 30)
    xy[INDEX["r_hip"]], xy[INDEX["l_hip"]] = (45, 30 + torso), (55, 30 + torso)
    return Pose(xy, np.ones(NUM_JOINTS, bool))


def _shift(pose, offsets):
    return Pose(pose.xy + offsets, pose.visible.copy())


def test_torso_length(rng):
    assert torso_length(_pose(rng, 20.0)) == 20.0


def test_distance_rule_boundaries(rng):
    gt = _pose(rng)
    gt.xy[...] = np.round(gt.xy)
    assert joint_correct(gt, gt).all()
    # exactly 0.2 * 20 = 4 pixels: the boundary counts as correct
    at = np.tile([0.0, 4.0], (NUM_JOINTS, 1))
    assert joint_correct(_shift(gt, at), gt).all()
    assert not joint_correct(_shift(gt, 2 * at), gt).any()


def test_degenerate_torso_skipped(rng, caplog):
    gt = _pose(rng)
    gt.xy[[INDEX["r_hip"], INDEX["l_hip"]]] = gt.xy[[INDEX["r_shoulder"], INDEX["l_shoulder"]]]
    with caplog.at_level(logging.WARNING):
        assert joint_correct(gt, gt) is None
        rep = report([gt, _pose(rng)], [gt, _pose(rng)])
    assert rep.skipped == 1 and rep.samples == 1
    assert "degenerate" in caplog.text


def test_pck_nan_for_invisible(rng):
    gt = _pose(rng)
    gt.visible[3] = False
    out = pck(gt, gt)
    assert np.isnan(out[3]) and np.nansum(out) == NUM_JOINTS - 1


def test_ap_examples():
    assert average_precision([0.9, 0.1, 0.5], [True, True, True]) == 1.0
    assert average_precision([0.9, 0.1, 0.5], [False, False, False]) == 0.0
    # ranked T, F, T: precision envelope 1 then 2/3
    assert abs(average_precision([0.9, 0.5, 0.1], [True, False, True]) - (0.5 + 0.5 * 2 / 3)) < 1e-12
    assert np.isnan(average_precision([], []))


def test_ap_ties_keep_input_order():
    assert average_precision([0.5, 0.5], [True, False]) == 1.0
    assert average_precision([0.5, 0.5], [False, True]) == 0.5


@pytest.mark.parametrize("seed", range(20))
def test_ap_random_half_correct(seed):
    # Monte-Carlo oracle: correctness independent of confidence -> AP about 0.5
    rng = np.random.default_rng(seed)
    n = 4000
    correct = rng.permutation(np.arange(n) < n // 2)
    assert abs(average_precision(rng.uniform(size=n), correct) - 0.5) <= 0.05


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(1, 200), st.sampled_from(["exp", "affine", "cube", "logit"]))
def test_ap_invariant_to_monotone_transform(seed, n, kind):
    rng = np.random.default_rng(seed)
    conf = rng.uniform(0.01, 0.99, n)
    conf[rng.random(n) < 0.2] = 0.5                # include ties
    correct = rng.random(n) < rng.uniform()
    f = {"exp": np.exp, "affine": lambda c: 3 * c - 7, "cube": lambda c: c ** 3,
         "logit": lambda c: np.log(c / (1 - c))}[kind]
    assert average_precision(f(conf), correct) == average_precision(conf, correct)


def test_gt_as_prediction_is_perfect(rng):
    gts = [_pose(rng) for _ in range(10)]
    rep = report(gts, gts)
    assert all(v == 1.0 for v in rep.pck) and all(v == 1.0 for v in rep.ap)
    assert rep.group_values(rep.pck) == {c: 1.0 for c in COLUMNS}


def test_mean_is_mean_of_joints(rng):
    gts = [_pose(rng) for _ in range(30)]
    preds = [Pose(g.xy + rng.normal(0, 4, g.xy.shape), g.visible, rng.uniform(size=NUM_JOINTS)) for g in gts]
    rep = report(preds, gts)
    assert abs(rep.mean_pck - np.mean(rep.pck)) <= 1e-12
    assert abs(rep.group_values(rep.ap)["Mean"] - np.mean(rep.ap)) <= 1e-12
    assert 0 < rep.mean_pck < 1


@pytest.mark.parametrize("seed", range(10))
def test_mean_column_against_group_columns(seed):
    # Head (2 joints) and Hip (3 joints) are larger groups, so Mean is the
    # size-weighted average of the group columns, not their plain average
    rng = np.random.default_rng(seed)
    values = list(rng.uniform(size=NUM_JOINTS))
    rep = EvalReport([f"j{i}" for i in range(NUM_JOINTS)], values, values, samples=1)
    groups = rep.group_values(values)
    sizes = {g: len(idx) for g, idx in GROUP_INDICES.items()}
    weighted = sum(sizes[g] * groups[g] for g in sizes) / NUM_JOINTS
    assert abs(groups["Mean"] - weighted) <= 1e-12
    printed = rep.table("pck").splitlines()[1].split()
    assert abs(float(printed[-1]) - 100 * np.mean(values)) <= 0.05 + 1e-9
    equal = EvalReport(rep.joints, [values[0]] * NUM_JOINTS, values, samples=1)
    cols = [float(v) for v in equal.table("pck").splitlines()[1].split()]
    assert abs(cols[-1] - np.mean(cols[:-1])) <= 0.05 + 1e-9


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**32 - 1), st.floats(0.1, 10.0))
def test_scale_equivariance(seed, k):
    rng = np.random.default_rng(seed)
    gts = [_pose(rng) for _ in range(5)]
    preds = [Pose(g.xy + rng.normal(0, 4, g.xy.shape), g.visible, rng.uniform(size=NUM_JOINTS)) for g in gts]
    a = report(preds, gts)
    b = report([Pose(p.xy * k, p.visible, p.confidence) for p in preds],
               [Pose(g.xy * k, g.visible) for g in gts])
    # scaling moves distances and torsos together; allow only rounding at the boundary
    assert abs(a.mean_pck - b.mean_pck) <= 1 / (5 * NUM_JOINTS) + 1e-12


def test_joint_without_visible_gt_is_excluded(rng, caplog):
    gts = [_pose(rng) for _ in range(3)]
    for g in gts:
        g.visible[0] = False
    with caplog.at_level(logging.INFO):
        rep = report(gts, gts)
    assert np.isnan(rep.pck[0]) and np.isnan(rep.ap[0])
    assert rep.mean_pck == 1.0
    assert rep.to_dict()["pck"][0] is None


def test_empty_dataset_is_an_error():
    with pytest.raises(ValueError):
        report([], [])
    with pytest.raises(ValueError):
        report([1], [])


def test_table_and_json(tmp_path, rng):
    gts = [_pose(rng) for _ in range(4)]
    rep = report(gts, gts)
    header, row = rep.table().splitlines()
    assert header.split()[1:] == list(COLUMNS)
    assert row.split() == ["100.0"] * len(COLUMNS)
    data = json.loads(rep.save(tmp_path / "r.json").read_text())
    assert data["mean_pck"] == 1.0 and [g["group"] for g in data["groups"]] == list(COLUMNS)
    assert isinstance(EvalReport(**{k: data[k] for k in ("joints", "pck", "ap", "samples")}).mean_pck, float)


def test_pck_curve_monotone(rng):
    gts = [_pose(rng) for _ in range(10)]
    preds = [_shift(g, rng.normal(0, 5, g.xy.shape)) for g in gts]
    curve = pck_curve(preds, gts, np.linspace(0, 1, 11))
    assert np.all(np.diff(curve) >= 0)
