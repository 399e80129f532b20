import numpy as np
import pytest

from mfpose.autograd import Tensor, concat, default_dtype, matmul, no_grad, set_default_dtype, stack
from mfpose.errors import DimensionError, UsageError
from mfpose.gradcheck import check_gradients


def test_matmul_identity():
    a = Tensor(np.eye(2))
    b = Tensor([[1.0, 2.0], [3.0, 4.0]])
    np.testing.assert_array_equal((a @ b).data, [[1, 2], [3, 4]])


def test_matmul_row_by_column():
    out = matmul(Tensor([[1.0, 2.0]]), Tensor([[3.0], [4.0]]))
    np.testing.assert_array_equal(out.data, [[11.0]])


def test_matmul_grad_is_row_sums_of_b(rng):
    a = Tensor(rng.standard_normal((3, 4)), requires_grad=True)
    b = Tensor(rng.standard_normal((4, 2)))
    (a @ b).sum().backward()
    expected = np.tile(b.data.sum(axis=1), (3, 1))
    np.testing.assert_allclose(a.grad, expected, rtol=0, atol=1e-12)
    res = check_gradients(lambda: (a @ b).sum(), {"a": a})
    assert res.max_error < 1e-4


def test_matmul_shape_error_names_both_shapes():
    with pytest.raises(DimensionError) as info:
        Tensor(np.ones((2, 3))) @ Tensor(np.ones((4, 5)))
    assert "(2, 3)" in str(info.value) and "(4, 5)" in str(info.value)


def test_batched_matmul_broadcast_grad(rng):
    a = Tensor(rng.standard_normal((2, 3, 4)), requires_grad=True)
    b = Tensor(rng.standard_normal((4, 5)), requires_grad=True)
    res = check_gradients(lambda: ((a @ b) * (a @ b)).sum(), {"a": a, "b": b})
    assert res.passed()


def test_backward_sum_gives_ones():
    x = Tensor([1.0, 2.0, 3.0], requires_grad=True)
    x.sum().backward()
    np.testing.assert_array_equal(x.grad, [1.0, 1.0, 1.0])


def test_backward_square():
    x = Tensor([1.0, 2.0], requires_grad=True)
    (x * x).sum().backward()
    np.testing.assert_array_equal(x.grad, [2.0, 4.0])


def test_backward_accumulates_across_calls():
    x = Tensor([1.0, 2.0], requires_grad=True)
    (x * x).sum().backward()
    (x * x).sum().backward()
    np.testing.assert_array_equal(x.grad, [4.0, 8.0])
    x.zero_grad()
    assert x.grad is None


def test_backward_needs_scalar():
    x = Tensor([1.0, 2.0], requires_grad=True)
    with pytest.raises(UsageError):
        (x * 2).backward()


def test_grad_shape_matches_data_through_broadcast(rng):
    x = Tensor(rng.standard_normal((3, 1)), requires_grad=True)
    y = Tensor(rng.standard_normal((1, 4)), requires_grad=True)
    (x * y + x - y).sum().backward()
    assert x.grad.shape == x.shape and y.grad.shape == y.shape


def test_shared_subexpression_gradient():
    # x feeds two branches; both contributions must arrive
    x = Tensor([3.0], requires_grad=True)
    y = x * x
    (y + y * x).sum().backward()
    np.testing.assert_allclose(x.grad, [2 * 3 + 3 * 9])


def test_elementwise_ops_gradcheck(rng):
    x = Tensor(rng.uniform(0.5, 2.0, (3, 4)), requires_grad=True)
    y = Tensor(rng.uniform(0.5, 2.0, (3, 4)), requires_grad=True)

    def loss():
        z = (x / y) - y ** 3 + (x * 2.0).exp() * 0.01 + x.log() + y.sqrt() + x.tanh()
        return (z * z).mean()

    assert check_gradients(loss, {"x": x, "y": y}).passed()


def test_indexing_and_reshape_gradcheck(rng):
    x = Tensor(rng.standard_normal((4, 6)), requires_grad=True)

    def loss():
        a = x[1:3, ::2]
        b = x[[0, 0, 3]]                     # repeated advanced index accumulates
        c = x.reshape(3, 8).transpose(1, 0)
        return (a * a).sum() + (b ** 3).sum() + (c[2:5] * 1.5).sum()

    assert check_gradients(loss, {"x": x}).passed()


def test_concat_and_stack_gradcheck(rng):
    a = Tensor(rng.standard_normal((2, 3)), requires_grad=True)
    b = Tensor(rng.standard_normal((1, 3)), requires_grad=True)
    w = rng.standard_normal((3, 3))
    s = rng.standard_normal((2, 2, 3))

    def loss():
        return (concat([a, b], axis=0) * w).sum() + (stack([a, a * 2], axis=1) * s).sum()

    assert check_gradients(loss, {"a": a, "b": b}).passed()


def test_ops_do_not_mutate_inputs(rng):
    data = rng.standard_normal((3, 3))
    x = Tensor(data.copy(), requires_grad=True)
    y = (x.exp() + x * 2).sum(axis=0)
    y.sum().backward()
    np.testing.assert_array_equal(x.data, data)


def test_reshape_error():
    with pytest.raises(DimensionError):
        Tensor(np.ones(6)).reshape(4, 2)


def test_no_grad_records_nothing():
    x = Tensor([1.0], requires_grad=True)
    with no_grad():
        y = x * 3
    assert not y.requires_grad


def test_default_dtype_switch():
    with default_dtype(np.float32):
        assert Tensor([1.0]).dtype == np.float32
    assert Tensor([1.0]).dtype == np.float64
    with pytest.raises(UsageError):
        set_default_dtype(np.int32)


def test_size_invariant():
    t = Tensor(np.zeros((2, 3, 4)))
    assert t.size == int(np.prod(t.shape)) == 24
