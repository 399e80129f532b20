"""Dense tensors with a reverse-mode gradient tape.

Every differentiable operation creates a new :class:`Tensor` holding a reference
to its parents and a closure that maps the output gradient to one gradient per
parent.  :meth:`Tensor.backward` walks that graph in reverse topological order.
The graph lives only as long as the tensors of a single forward pass reference
it; nothing is retained across passes.
"""
from __future__ import annotations

import contextlib
from typing import Callable, Iterable, Sequence

import numpy as np

from mfpose.errors import DimensionError, UsageError

_state = {"dtype": np.dtype(np.float64), "grad_enabled": True}


def get_default_dtype() -> np.dtype:
    return _state["dtype"]


def set_default_dtype(dtype) -> None:
    """Switch the dtype used for newly created tensors (float64 or float32)."""
    dtype = np.dtype(dtype)
    if dtype not in (np.dtype(np.float64), np.dtype(np.float32)):
        raise UsageError(f"unsupported dtype {dtype}")
    _state["dtype"] = dtype


@contextlib.contextmanager
def default_dtype(dtype):
    previous = _state["dtype"]
    set_default_dtype(dtype)
    try:
        yield
    finally:
        _state["dtype"] = previous


@contextlib.contextmanager
def no_grad():
    """Disable graph recording inside the block."""
    previous = _state["grad_enabled"]
    _state["grad_enabled"] = False
    try:
        yield
    finally:
        _state["grad_enabled"] = previous


def is_grad_enabled() -> bool:
    return _state["grad_enabled"]


def unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum ``grad`` down to ``shape``, undoing numpy broadcasting."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward", "__weakref__")
    __array_priority__ = 100.0

    def __init__(self, data, requires_grad: bool = False, dtype=None):
        if isinstance(data, Tensor):
            data = data.data
        self.data = np.array(data, dtype=dtype or _state["dtype"])
        self.grad: np.ndarray | None = None
        self.requires_grad = bool(requires_grad)
        self._parents: tuple = ()
        self._backward: Callable | None = None

    # construction helpers -------------------------------------------------

    @classmethod
    def _wrap(cls, data: np.ndarray) -> "Tensor":
        out = cls.__new__(cls)
        out.data = data
        out.grad = None
        out.requires_grad = False
        out._parents = ()
        out._backward = None
        return out

    def _const(self, other) -> "Tensor":
        if isinstance(other, Tensor):
            return other
        return Tensor._wrap(np.asarray(other, dtype=self.data.dtype))

    # introspection ---------------------------------------------------------

    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def is_leaf(self) -> bool:
        return self._backward is None

    def numpy(self) -> np.ndarray:
        return self.data.copy()

    def item(self) -> float:
        return float(self.data.reshape(-1)[0]) if self.data.size == 1 else float(self.data)

    def detach(self) -> "Tensor":
        return Tensor._wrap(self.data)

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self) -> str:
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}{flag})"

    def __len__(self) -> int:
        return len(self.data)

    # autograd --------------------------------------------------------------

    def backward(self) -> None:
        """Back-propagate from this scalar through the recorded graph.

        Gradients are added into ``.grad`` of every reachable leaf that has
        ``requires_grad``.  Calling this again (on the same or a new graph)
        without clearing ``.grad`` accumulates.
        """
        if self.data.size != 1:
            raise UsageError(f"backward() needs a scalar loss, got shape {self.shape}")
        if not self.requires_grad:
            raise UsageError("loss does not depend on any tensor with requires_grad")
        order = _topological_order(self)
        grads = {id(self): np.ones_like(self.data)}
        for node in reversed(order):
            g = grads.pop(id(node), None)
            if g is None:
                continue
            if node._backward is None:
                node.grad = g.copy() if node.grad is None else node.grad + g
                continue
            for parent, pg in zip(node._parents, node._backward(g)):
                if pg is None or not parent.requires_grad:
                    continue
                key = id(parent)
                if key in grads:
                    grads[key] = grads[key] + pg
                else:
                    grads[key] = pg

    # arithmetic ------------------------------------------------------------

    def __add__(self, other):
        other = self._const(other)
        a, b = self.shape, other.shape
        return _op(self.data + other.data, (self, other),
                   lambda g: (unbroadcast(g, a), unbroadcast(g, b)))

    __radd__ = __add__

    def __sub__(self, other):
        other = self._const(other)
        a, b = self.shape, other.shape
        return _op(self.data - other.data, (self, other),
                   lambda g: (unbroadcast(g, a), unbroadcast(-g, b)))

    def __rsub__(self, other):
        return self._const(other) - self

    def __mul__(self, other):
        other = self._const(other)
        x, y = self.data, other.data
        return _op(x * y, (self, other),
                   lambda g: (unbroadcast(g * y, x.shape), unbroadcast(g * x, y.shape)))

    __rmul__ = __mul__

    def __truediv__(self, other):
        other = self._const(other)
        x, y = self.data, other.data
        return _op(x / y, (self, other),
                   lambda g: (unbroadcast(g / y, x.shape),
                              unbroadcast(-g * x / (y * y), y.shape)))

    def __rtruediv__(self, other):
        return self._const(other) / self

    def __neg__(self):
        return _op(-self.data, (self,), lambda g: (-g,))

    def __pow__(self, exponent):
        if isinstance(exponent, Tensor):
            raise UsageError("only constant exponents are supported")
        x = self.data
        p = float(exponent)
        return _op(x ** p, (self,), lambda g: (g * p * x ** (p - 1.0),))

    def __matmul__(self, other):
        return matmul(self, other)

    def __rmatmul__(self, other):
        return matmul(self._const(other), self)

    def __getitem__(self, index):
        x = self.data
        shape, dtype = x.shape, x.dtype
        basic = _is_basic_index(index)

        def back(g):
            out = np.zeros(shape, dtype=dtype)
            if basic:
                out[index] = g
            else:
                np.add.at(out, index, g)
            return (out,)

        return _op(x[index], (self,), back)

    # elementwise -----------------------------------------------------------

    def exp(self):
        y = np.exp(self.data)
        return _op(y, (self,), lambda g: (g * y,))

    def log(self):
        x = self.data
        return _op(np.log(x), (self,), lambda g: (g / x,))

    def sqrt(self):
        y = np.sqrt(self.data)
        return _op(y, (self,), lambda g: (g * 0.5 / y,))

    def tanh(self):
        y = np.tanh(self.data)
        return _op(y, (self,), lambda g: (g * (1.0 - y * y),))

    # reductions ------------------------------------------------------------

    def sum(self, axis=None, keepdims: bool = False):
        shape = self.shape

        def back(g):
            if axis is not None and not keepdims:
                g = np.expand_dims(g, _norm_axes(axis, len(shape)))
            return (np.broadcast_to(g, shape).copy(),)

        return _op(np.sum(self.data, axis=axis, keepdims=keepdims), (self,), back)

    def mean(self, axis=None, keepdims: bool = False):
        if axis is None:
            count = self.size
        else:
            count = int(np.prod([self.shape[a] for a in _norm_axes(axis, self.ndim)]))
        return self.sum(axis=axis, keepdims=keepdims) * (1.0 / count)

    # shape -----------------------------------------------------------------

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        old = self.shape
        try:
            y = self.data.reshape(shape)
        except ValueError as exc:
            raise DimensionError(f"cannot reshape {old} to {shape}") from exc
        return _op(y, (self,), lambda g: (g.reshape(old),))

    def transpose(self, *axes):
        if len(axes) == 1 and isinstance(axes[0], (tuple, list)):
            axes = tuple(axes[0])
        if not axes:
            axes = tuple(reversed(range(self.ndim)))
        inverse = tuple(np.argsort(axes))
        return _op(self.data.transpose(axes), (self,), lambda g: (g.transpose(inverse),))

    def swapaxes(self, a: int, b: int):
        axes = list(range(self.ndim))
        axes[a], axes[b] = axes[b], axes[a]
        return self.transpose(tuple(axes))

    @property
    def T(self):
        return self.transpose()


def _norm_axes(axis, ndim: int) -> tuple:
    if isinstance(axis, int):
        axis = (axis,)
    return tuple(sorted(a % ndim for a in axis))


def _is_basic_index(index) -> bool:
    items = index if isinstance(index, tuple) else (index,)
    return all(isinstance(i, (int, np.integer, slice)) or i is None or i is Ellipsis
               for i in items)


def _op(data: np.ndarray, parents: tuple, backward: Callable) -> Tensor:
    out = Tensor._wrap(data)
    if _state["grad_enabled"] and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = parents
        out._backward = backward
    return out


def make_op(data: np.ndarray, parents: Sequence[Tensor], backward: Callable) -> Tensor:
    """Record a custom differentiable op.

    ``backward(grad)`` must return one array (or ``None``) per parent.
    """
    return _op(data, tuple(parents), backward)


def _topological_order(root: Tensor) -> list:
    order, visited = [], set()
    stack = [(root, False)]
    while stack:
        node, done = stack.pop()
        if done:
            order.append(node)
            continue
        if id(node) in visited:
            continue
        visited.add(id(node))
        stack.append((node, True))
        for parent in node._parents:
            if parent.requires_grad and id(parent) not in visited:
                stack.append((parent, False))
    return order


def tensor(data, requires_grad: bool = False, dtype=None) -> Tensor:
    return Tensor(data, requires_grad=requires_grad, dtype=dtype)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Batched matrix product with numpy broadcasting over leading extents."""
    a, b = as_tensor(a), as_tensor(b)
    x, y = a.data, b.data
    if x.ndim < 2 or y.ndim < 2 or x.shape[-1] != y.shape[-2]:
        raise DimensionError(f"matmul shape mismatch: {x.shape} @ {y.shape}")
    try:
        out = np.matmul(x, y)
    except ValueError as exc:
        raise DimensionError(f"matmul batch extents not broadcastable: {x.shape} @ {y.shape}") from exc

    def back(g):
        ga = np.matmul(g, np.swapaxes(y, -1, -2)) if a.requires_grad else None
        gb = np.matmul(np.swapaxes(x, -1, -2), g) if b.requires_grad else None
        return (None if ga is None else unbroadcast(ga, x.shape),
                None if gb is None else unbroadcast(gb, y.shape))

    return _op(out, (a, b), back)


def concat(tensors: Iterable[Tensor], axis: int = 0) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    if not tensors:
        raise UsageError("concat of an empty sequence")
    try:
        out = np.concatenate([t.data for t in tensors], axis=axis)
    except ValueError as exc:
        shapes = [t.shape for t in tensors]
        raise DimensionError(f"cannot concatenate shapes {shapes} along axis {axis}") from exc
    bounds = np.cumsum([t.shape[axis] for t in tensors])[:-1]

    def back(g):
        return tuple(np.split(g, bounds, axis=axis))

    return _op(out, tuple(tensors), back)


def stack(tensors: Iterable[Tensor], axis: int = 0) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    return concat([t.reshape(_insert(t.shape, axis)) for t in tensors], axis=axis)


def _insert(shape: tuple, axis: int) -> tuple:
    axis = axis % (len(shape) + 1)
    return shape[:axis] + (1,) + shape[axis:]
