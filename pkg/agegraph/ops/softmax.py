import numpy as np

from ..common import ShapeError, StructuralError, scatter_add
from .base_op import Op


def group_ids_from_partition(groups, size):
    """
    Turns a partition given as index sequences into one group id per score.
    """
    ids = np.full(size, -1, dtype=np.int64)
    for gid, members in enumerate(groups):
        members = np.asarray(members, dtype=np.int64)
        if members.size == 0:
            raise StructuralError(f'softmax group {gid} is empty')
        if np.any(ids[members] != -1):
            raise StructuralError(f'softmax group {gid} overlaps an earlier group')
        ids[members] = gid
    if np.any(ids == -1):
        raise StructuralError('softmax groups do not cover every score')
    return ids, len(groups)


class SoftmaxOverGroupsOp(Op):
    """
    Softmax of a flat score vector within each group of a partition,
    computed with the per-group max subtracted.
    """
    def __init__(self, group_ids, num_groups):
        self.group_ids = np.asarray(group_ids, dtype=np.int64)
        self.num_groups = num_groups

    def forward(self, scores):
        if scores.ndim != 1 or scores.shape[0] != self.group_ids.shape[0]:
            raise ShapeError(
                f'softmax_over_groups: scores {scores.shape} vs {self.group_ids.shape[0]} group ids')
        counts = np.bincount(self.group_ids, minlength=self.num_groups)
        if np.any(counts == 0):
            raise StructuralError('softmax_over_groups: empty group {}'.format(
                int(np.argmin(counts))))

        peak = np.full(self.num_groups, -np.inf)
        np.maximum.at(peak, self.group_ids, scores)
        e = np.exp(scores - peak[self.group_ids])
        total = scatter_add(self.group_ids, e, self.num_groups)
        self.out = e / total[self.group_ids]
        return self.out

    def backward(self, grad):
        weighted = scatter_add(self.group_ids, grad * self.out, self.num_groups)
        return (self.out * (grad - weighted[self.group_ids]), )
