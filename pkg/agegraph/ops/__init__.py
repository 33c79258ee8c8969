from numbers import Number

import numpy as np

from .activations import DropoutOp, LeakyReluOp, NegPartOp, ReluOp
from .arith import (AbsOp, AddOp, AddScalarOp, ConcatOp, MeanOp, MulOp,
                    ReshapeOp, ScaleOp, SubOp, SumOp, TakeOp)
from .base_op import Op
from .conv import Conv2dOp
from .linalg import MatmulOp, RowDistanceSqOp
from .segment import MaxOverNeighborsOp, SegmentMeanOp
from .softmax import SoftmaxOverGroupsOp, group_ids_from_partition
from ..tensor import as_tensor

OPS = [
    AddOp, SubOp, MulOp, ScaleOp, AddScalarOp, AbsOp, SumOp, MeanOp, ConcatOp,
    TakeOp, ReshapeOp, MatmulOp, RowDistanceSqOp, LeakyReluOp, DropoutOp,
    ReluOp, NegPartOp, SoftmaxOverGroupsOp, Conv2dOp, MaxOverNeighborsOp,
    SegmentMeanOp
]


def add(a, b):
    if isinstance(b, Number):
        return AddScalarOp.apply(a, constant=b)
    if isinstance(a, Number):
        return AddScalarOp.apply(b, constant=a)
    return AddOp.apply(a, b)


def sub(a, b):
    if isinstance(b, Number):
        return AddScalarOp.apply(a, constant=-b)
    return SubOp.apply(a, b)


def mul(a, b):
    if isinstance(b, Number):
        return ScaleOp.apply(a, factor=b)
    if isinstance(a, Number):
        return ScaleOp.apply(b, factor=a)
    return MulOp.apply(a, b)


def scale(x, factor):
    return ScaleOp.apply(x, factor=factor)


def neg(x):
    return ScaleOp.apply(x, factor=-1.0)


def abs_(x):
    return AbsOp.apply(x)


def sum_(x, axis=None, keepdims=False):
    return SumOp.apply(x, axis=axis, keepdims=keepdims)


def mean(x, axis=None, keepdims=False):
    return MeanOp.apply(x, axis=axis, keepdims=keepdims)


def concat(tensors, axis=-1):
    return ConcatOp.apply(*tensors, axis=axis)


def take(x, indices, axis=0):
    return TakeOp.apply(x, indices=indices, axis=axis)


def gather_rows(x, index):
    return TakeOp.apply(x, indices=index, axis=0)


def reshape(x, shape):
    return ReshapeOp.apply(x, shape=shape)


def matmul(a, b):
    return MatmulOp.apply(a, b)


def row_distance_sq(a, b):
    return RowDistanceSqOp.apply(a, b)


def leaky_relu(x, slope=0.01):
    return LeakyReluOp.apply(x, slope=slope)


def dropout(x, rate, rng_seed, training=True):
    return DropoutOp.apply(x, rate=rate, seed=rng_seed, training=training)


def relu(x):
    return ReluOp.apply(x)


def neg_part(x):
    return NegPartOp.apply(x)


def softmax_over_groups(scores, groups):
    """
    `groups` is either a partition of the score indices (a sequence of index
    sequences) or an integer array holding one group id per score.
    """
    scores = as_tensor(scores)
    if isinstance(groups, np.ndarray) and groups.dtype.kind in 'iu':
        group_ids = groups
        num_groups = int(group_ids.max()) + 1 if group_ids.size else 0
    else:
        group_ids, num_groups = group_ids_from_partition(groups, scores.shape[0])
    return SoftmaxOverGroupsOp.apply(scores, group_ids=group_ids, num_groups=num_groups)


def conv2d(image, kernels, stride=1):
    return Conv2dOp.apply(image, kernels, stride=stride)


def max_over_neighbors(x):
    return MaxOverNeighborsOp.apply(x)


def segment_mean(x, segment_ids, num_segments=None):
    segment_ids = np.asarray(segment_ids, dtype=np.int64)
    if num_segments is None:
        num_segments = int(segment_ids.max()) + 1
    return SegmentMeanOp.apply(x, segment_ids=segment_ids, num_segments=num_segments)
