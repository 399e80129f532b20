from mfpose.autograd.tensor import (
    Tensor,
    as_tensor,
    concat,
    default_dtype,
    get_default_dtype,
    is_grad_enabled,
    make_op,
    matmul,
    no_grad,
    set_default_dtype,
    stack,
    tensor,
)
from mfpose.autograd import functional
from mfpose.autograd.nn import Module, Parameter

__all__ = [
    "Module",
    "Parameter",
    "Tensor",
    "as_tensor",
    "concat",
    "default_dtype",
    "functional",
    "get_default_dtype",
    "is_grad_enabled",
    "make_op",
    "matmul",
    "no_grad",
    "set_default_dtype",
    "stack",
    "tensor",
]
