import numpy as np

from ..common import ShapeError, StructuralError, scatter_add
from .base_op import Op


class MaxOverNeighborsOp(Op):
    """
    Elementwise max over the neighbor axis of an N×m×d block. Gradient goes
    to the first maximizing neighbor.
    """
    def forward(self, x):
        if x.ndim != 3:
            raise ShapeError(f'max_over_neighbors: expected N×m×d, got {x.shape}')
        if x.shape[1] == 0:
            raise StructuralError('max_over_neighbors: empty neighborhood')
        self.shape = x.shape
        self.argmax = np.argmax(x, axis=1)
        return np.take_along_axis(x, self.argmax[:, None, :], axis=1)[:, 0, :]

    def backward(self, grad):
        out = np.zeros(self.shape)
        np.put_along_axis(out, self.argmax[:, None, :], grad[:, None, :], axis=1)
        return (out, )


class SegmentMeanOp(Op):
    """
    Mean of the rows belonging to each segment; row r belongs to segment
    segment_ids[r].
    """
    def __init__(self, segment_ids, num_segments):
        self.segment_ids = np.asarray(segment_ids, dtype=np.int64)
        self.num_segments = num_segments

    def forward(self, x):
        if x.shape[0] != self.segment_ids.shape[0]:
            raise ShapeError(
                f'segment_mean: {x.shape[0]} rows vs {self.segment_ids.shape[0]} segment ids')
        self.counts = np.bincount(self.segment_ids, minlength=self.num_segments)
        if np.any(self.counts == 0):
            raise StructuralError('segment_mean: empty segment {}'.format(
                int(np.argmin(self.counts))))
        total = scatter_add(self.segment_ids, x, self.num_segments)
        shape = (-1, ) + (1, ) * (x.ndim - 1)
        return total / self.counts.reshape(shape)

    def backward(self, grad):
        shape = (-1, ) + (1, ) * (grad.ndim - 1)
        return ((grad / self.counts.reshape(shape))[self.segment_ids], )
