from ..common import ConfigError
from ..ops import reshape
from ..tensor import as_tensor
from .base_variant import Variant
from .edge_conv import EdgeConvVariant
from .gin import GinVariant
from .graph_sage import GraphSageVariant
from .max_relative import MaxRelativeVariant

VARIANTS = [MaxRelativeVariant, EdgeConvVariant, GraphSageVariant, GinVariant]


def make_variant(name: str) -> Variant:
    for cls in VARIANTS:
        if cls.name() == name:
            return cls()
    raise ConfigError('unknown graph conv variant {!r}, expected one of {}'.format(
        name, [v.name() for v in VARIANTS]))


def variant_aggregate(variant, h_i, neighbor_hs, params):
    """
    Aggregates one node (h_i: d, neighbor_hs: m×d) or a block of nodes
    (h_i: N×d, neighbor_hs: N×m×d) with the named variant.
    """
    if isinstance(variant, str):
        variant = make_variant(variant)
    h_i, neighbor_hs = as_tensor(h_i), as_tensor(neighbor_hs)
    if h_i.ndim == 1:
        d = h_i.shape[0]
        out = variant.aggregate(reshape(h_i, (1, d)), reshape(neighbor_hs, (1, -1, d)), params)
        return reshape(out, (-1,))
    return variant.aggregate(h_i, neighbor_hs, params)
