import numpy as np

from ..common import ShapeError
from .base_op import Op


class MatmulOp(Op):
    def forward(self, a, b):
        if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
            raise ShapeError(f'matmul: cannot multiply {a.shape} by {b.shape}')
        self.a, self.b = a, b
        return a @ b

    def backward(self, grad):
        return grad @ self.b.T, self.a.T @ grad


class RowDistanceSqOp(Op):
    """
    Squared Euclidean distance between corresponding rows (last axis).
    """
    def forward(self, a, b):
        if a.shape != b.shape:
            raise ShapeError(f'row_distance_sq: shapes {a.shape} and {b.shape} differ')
        self.diff = a - b
        return np.sum(self.diff * self.diff, axis=-1)

    def backward(self, grad):
        g = 2.0 * self.diff * grad[..., None]
        return g, -g
