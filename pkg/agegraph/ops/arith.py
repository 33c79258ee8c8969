import numpy as np

from ..common import ShapeError, scatter_add
from .base_op import Op, unbroadcast


def _broadcast_shape(op_name, a, b):
    try:
        return np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeError(f'{op_name}: cannot combine shapes {a.shape} and {b.shape}')


class AddOp(Op):
    def forward(self, a, b):
        _broadcast_shape('add', a, b)
        self.shapes = (a.shape, b.shape)
        return a + b

    def backward(self, grad):
        return unbroadcast(grad, self.shapes[0]), unbroadcast(grad, self.shapes[1])


class SubOp(Op):
    def forward(self, a, b):
        _broadcast_shape('sub', a, b)
        self.shapes = (a.shape, b.shape)
        return a - b

    def backward(self, grad):
        return unbroadcast(grad, self.shapes[0]), unbroadcast(-grad, self.shapes[1])


class MulOp(Op):
    def forward(self, a, b):
        _broadcast_shape('mul', a, b)
        self.a, self.b = a, b
        return a * b

    def backward(self, grad):
        return (unbroadcast(grad * self.b, self.a.shape),
                unbroadcast(grad * self.a, self.b.shape))


class ScaleOp(Op):
    def __init__(self, factor):
        self.factor = float(factor)

    def forward(self, x):
        return x * self.factor

    def backward(self, grad):
        return (grad * self.factor, )


class AddScalarOp(Op):
    def __init__(self, constant):
        self.constant = float(constant)

    def forward(self, x):
        return x + self.constant

    def backward(self, grad):
        return (grad, )


class AbsOp(Op):
    def forward(self, x):
        self.sign = np.sign(x)
        return np.abs(x)

    def backward(self, grad):
        return (grad * self.sign, )


def _expand(grad, shape, axis, keepdims):
    if axis is not None and not keepdims:
        grad = np.expand_dims(grad, axis)
    return np.broadcast_to(grad, shape)


class SumOp(Op):
    def __init__(self, axis=None, keepdims=False):
        self.axis = axis
        self.keepdims = keepdims

    def forward(self, x):
        self.shape = x.shape
        return np.asarray(x.sum(axis=self.axis, keepdims=self.keepdims))

    def backward(self, grad):
        return (np.array(_expand(grad, self.shape, self.axis, self.keepdims)), )


class MeanOp(Op):
    def __init__(self, axis=None, keepdims=False):
        self.axis = axis
        self.keepdims = keepdims

    def forward(self, x):
        self.shape = x.shape
        out = np.asarray(x.mean(axis=self.axis, keepdims=self.keepdims))
        self.count = x.size // max(out.size, 1) if x.size else 1
        return out

    def backward(self, grad):
        return (np.array(_expand(grad, self.shape, self.axis, self.keepdims)) / self.count, )


class ConcatOp(Op):
    """
    Concatenation along `axis`; on the last axis this is the row-wise
    pairing [a ⊕ b] of two feature blocks.
    """
    def __init__(self, axis=-1):
        self.axis = axis

    def forward(self, *arrays):
        try:
            out = np.concatenate(arrays, axis=self.axis)
        except ValueError:
            raise ShapeError('concat: incompatible shapes {}'.format(
                [a.shape for a in arrays]))
        self.sizes = [a.shape[self.axis] for a in arrays]
        return out

    def backward(self, grad):
        splits = np.cumsum(self.sizes)[:-1]
        return tuple(np.split(grad, splits, axis=self.axis))


class TakeOp(Op):
    """
    np.take along one axis with an integer index array of any shape; repeated
    indices accumulate gradient.
    """
    def __init__(self, indices, axis=0):
        self.indices = np.asarray(indices, dtype=np.int64)
        self.axis = axis

    def forward(self, x):
        self.shape = x.shape
        self.axis = self.axis % x.ndim
        return np.take(x, self.indices, axis=self.axis)

    def backward(self, grad):
        k = self.indices.ndim
        grad = np.moveaxis(grad, list(range(self.axis, self.axis + k)), list(range(k)))
        summed = scatter_add(self.indices, grad, self.shape[self.axis])
        return (np.moveaxis(summed, 0, self.axis), )


class ReshapeOp(Op):
    def __init__(self, shape):
        self.target = tuple(shape)

    def forward(self, x):
        self.shape = x.shape
        try:
            return x.reshape(self.target)
        except ValueError:
            raise ShapeError(f'reshape: cannot view {x.shape} as {self.target}')

    def backward(self, grad):
        return (grad.reshape(self.shape), )
