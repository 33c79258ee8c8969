from ..ops import max_over_neighbors, reshape
from .base_variant import Variant


class MaxRelativeVariant(Variant):
    """W·[hᵢ ⊕ maxⱼ(hⱼ − hᵢ)]"""
    def aggregate(self, center, neighbors, params):
        n, d = center.shape
        relative = max_over_neighbors(neighbors - reshape(center, (n, 1, d)))
        return center @ params['self'] + relative @ params['neighbor']
