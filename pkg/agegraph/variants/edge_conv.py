from ..ops import max_over_neighbors, reshape
from .base_variant import Variant


class EdgeConvVariant(Variant):
    """maxⱼ W·[hᵢ ⊕ (hⱼ − hᵢ)]"""
    def aggregate(self, center, neighbors, params):
        n, m, d = neighbors.shape
        edges = reshape(neighbors - reshape(center, (n, 1, d)), (n * m, d))
        messages = reshape(edges @ params['neighbor'], (n, m, -1))
        # hᵢ·W_self is the same for every j, so it moves out of the max
        return center @ params['self'] + max_over_neighbors(messages)
