from ..ops import mean
from .base_variant import Variant


class GraphSageVariant(Variant):
    """W·[hᵢ ⊕ meanⱼ hⱼ]"""
    def aggregate(self, center, neighbors, params):
        return center @ params['self'] + mean(neighbors, axis=1) @ params['neighbor']
