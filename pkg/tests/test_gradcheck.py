import numpy as np

from mfpose.autograd import Tensor
from mfpose.gradcheck import check_gradients, relative_error


def _quadratic(rng):
    a = Tensor(rng.standard_normal((3, 3)), requires_grad=True)
    b = Tensor(rng.standard_normal((3, 1)), requires_grad=True)
    return a, b, lambda: ((a @ b) * (a @ b)).sum() + (b * 3.0).sum()


def test_correct_gradients_pass(rng):
    a, b, loss = _quadratic(rng)
    res = check_gradients(loss, {"a": a, "b": b})
    assert res.passed()
    assert res.coords_checked == 12


def test_corrupted_gradient_fails_with_its_group(rng):
    a, b, loss = _quadratic(rng)
    res = check_gradients(loss, {"a": a, "b": b}, groups=lambda n: f"grp/{n}",
                          corrupt=lambda n: n == "b")
    assert res.failures() == ["grp/b"]
    # a 1% scaling shows up as roughly 1% relative error
    assert 0.005 < res.per_group["grp/b"] < 0.011


def test_check_restores_data(rng):
    a, b, loss = _quadratic(rng)
    before = a.data.copy()
    check_gradients(loss, {"a": a})
    np.testing.assert_array_equal(a.data, before)


def test_coordinate_sampling(rng):
    a, b, loss = _quadratic(rng)
    res = check_gradients(loss, {"a": a, "b": b}, rng=rng, max_coords=2)
    assert res.coords_checked == 4


def test_relative_error_floor():
    assert relative_error(np.array(1.0), np.array(1.01)) < 0.01
    assert relative_error(np.array(0.0), np.array(1e-9)) == 1.0
    assert relative_error(np.array(0.0), np.array(1e-9), floor=1e-4) == 1e-5
