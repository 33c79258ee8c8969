from typing import Dict, Tuple

import numpy as np

from ..common import glorot_uniform, snake_name
from ..tensor import Tensor

Shapes = Dict[str, Tuple[int, ...]]


class Variant:
    """
    A graph-convolution flavour: how a node's state is combined with the
    states of its neighbors under one relation.

    Weights act on row vectors, so the column-vector form W·[hᵢ ⊕ x] is written
    hᵢ·W_self + x·W_neighbor with W = [W_self; W_neighbor]. W_self is shared by
    every relation of a layer, W_neighbor belongs to one relation.
    """
    def layer_shapes(self, d_in: int, d_out: int) -> Shapes:
        return {'self': (d_in, d_out)}

    def relation_shapes(self, d_in: int, d_out: int) -> Shapes:
        return {'neighbor': (d_in, d_out)}

    def init(self, name, shape, cfg, rng) -> np.ndarray:
        return glorot_uniform(shape, shape[0], shape[1], rng)

    def aggregate(self, center: Tensor, neighbors: Tensor, params: Dict[str, Tensor]) -> Tensor:
        """
        center: N×d, neighbors: N×m×d, result: N×d_out (before activation).
        """
        raise NotImplementedError

    @classmethod
    def name(cls) -> str:
        return snake_name(cls, 'Variant')
