import numpy as np

from ..common import glorot_uniform
from ..ops import mul, sum_
from .base_variant import Variant


class GinVariant(Variant):
    """W·((1 + ε)hᵢ + Σⱼ hⱼ) with a learnable ε per relation."""
    def layer_shapes(self, d_in, d_out):
        return {}

    def relation_shapes(self, d_in, d_out):
        return {'weight': (d_in, d_out), 'eps': ()}

    def init(self, name, shape, cfg, rng):
        if name == 'eps':
            return np.array(cfg.gin_eps)
        return glorot_uniform(shape, shape[0], shape[1], rng)

    def aggregate(self, center, neighbors, params):
        combined = mul(center, params['eps'] + 1.0) + sum_(neighbors, axis=1)
        return combined @ params['weight']
