import numpy as np
import pytest

from agegraph.common import ConfigError, make_rng
from agegraph.params import ModelConfig
from agegraph.tensor import Tensor
from agegraph.variants import VARIANTS, make_variant, variant_aggregate

from utils import assert_close

D, D_OUT = 3, 2


def star(seed=0):
    """Centre node 0 with three leaves."""
    rng = make_rng(seed, 5)
    return rng.normal(size=D), rng.normal(size=(3, D))


def stacked(seed=0):
    rng = make_rng(seed, 6)
    return rng.normal(size=(2 * D, D_OUT))


def split(w):
    return {'self': Tensor(w[:D]), 'neighbor': Tensor(w[D:])}


def test_variant_names():
    assert [v.name() for v in VARIANTS] == ['max_relative', 'edge_conv', 'graph_sage', 'gin']


def test_unknown_variant():
    with pytest.raises(ConfigError):
        make_variant('graph_transformer')
    with pytest.raises(ConfigError):
        variant_aggregate('graph_transformer', np.zeros(D), np.zeros((2, D)), {})
    with pytest.raises(ConfigError):
        ModelConfig(variant='graph_transformer').validate()


def test_max_relative_star():
    h_i, nbrs = star()
    w = stacked()
    expected = np.concatenate([h_i, np.max(nbrs - h_i, axis=0)]) @ w
    assert_close(variant_aggregate('max_relative', h_i, nbrs, split(w)), expected)


def test_edge_conv_star():
    h_i, nbrs = star()
    w = stacked()
    messages = [np.concatenate([h_i, h_j - h_i]) @ w for h_j in nbrs]
    expected = np.max(np.stack(messages), axis=0)
    assert_close(variant_aggregate('edge_conv', h_i, nbrs, split(w)), expected)


def test_graph_sage_star():
    h_i, nbrs = star()
    w = stacked()
    expected = np.concatenate([h_i, nbrs.mean(axis=0)]) @ w
    assert_close(variant_aggregate('graph_sage', h_i, nbrs, split(w)), expected)


def test_gin_star():
    h_i, nbrs = star()
    w = make_rng(7).normal(size=(D, D_OUT))
    eps = 0.3
    expected = ((1 + eps) * h_i + nbrs.sum(axis=0)) @ w
    params = {'weight': Tensor(w), 'eps': Tensor(np.array(eps))}
    assert_close(variant_aggregate('gin', h_i, nbrs, params), expected)


def test_max_relative_equal_neighbors():
    h_i = make_rng(8).normal(size=D)
    w = stacked(1)
    out = variant_aggregate('max_relative', h_i, np.stack([h_i] * 4), split(w))
    assert_close(out, np.concatenate([h_i, np.zeros(D)]) @ w)


def test_edge_conv_single_neighbor():
    h_i, nbrs = star(2)
    w = stacked(2)
    expected = np.concatenate([h_i, nbrs[0] - h_i]) @ w
    assert_close(variant_aggregate('edge_conv', h_i, nbrs[:1], split(w)), expected)


def test_block_matches_rows():
    rng = make_rng(9)
    centers, nbrs = rng.normal(size=(4, D)), rng.normal(size=(4, 3, D))
    w = stacked(3)
    for variant in ('max_relative', 'edge_conv', 'graph_sage'):
        block = variant_aggregate(variant, Tensor(centers), Tensor(nbrs), split(w)).values
        for i in range(4):
            assert_close(block[i], variant_aggregate(variant, centers[i], nbrs[i], split(w)))


def test_gin_eps_init():
    cfg = ModelConfig(gin_eps=0.25)
    variant = make_variant('gin')
    assert set(variant.relation_shapes(4, 2)) == {'weight', 'eps'}
    assert variant.layer_shapes(4, 2) == {}
    assert float(variant.init('eps', (), cfg, make_rng(0))) == 0.25
