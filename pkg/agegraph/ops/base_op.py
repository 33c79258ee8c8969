from typing import Optional, Tuple

import numpy as np

from ..common import check_finite, snake_name
from ..contexts import active_tape
from ..tensor import Tensor, as_tensor


class Op:
    """
    A differentiable operation.

    Subclasses take their non-tensor arguments in __init__, compute on raw
    arrays in forward (saving whatever backward needs on self), and return one
    gradient per input from backward (None where an input gets no gradient).
    A fresh instance is created for every application.
    """
    def forward(self, *arrays: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def backward(self, grad: np.ndarray) -> Tuple[Optional[np.ndarray], ...]:
        raise NotImplementedError

    @classmethod
    def apply(cls, *tensors, **kwargs) -> Tensor:
        tensors = [as_tensor(t) for t in tensors]
        op = cls(**kwargs)
        values = op.forward(*[t.values for t in tensors])
        check_finite(cls.name(), values)

        requires_grad = any(t.requires_grad for t in tensors)
        out = Tensor(values, requires_grad=requires_grad)

        tape = active_tape()
        if tape is not None and requires_grad:
            tape.record(op, tensors, out)
        return out

    @classmethod
    def name(cls) -> str:
        return snake_name(cls, 'Op')


def unbroadcast(grad: np.ndarray, shape) -> np.ndarray:
    """
    Sum a gradient over the axes numpy broadcast an input of `shape` across.
    """
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, extent in enumerate(shape):
        if extent == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad
