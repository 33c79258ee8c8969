import logging as log
from typing import Dict, List, NamedTuple, Optional

import numpy as np

from .common import ConfigError, StructuralError, UsageError
from .graph import PatchGraph
from .ops import (concat, dropout, leaky_relu, mul, reshape, softmax_over_groups,
                  take)
from .params import ModelConfig, ParamStore
from .tensor import Tensor
from .variants import make_variant


class AttentionField(NamedTuple):
    """
    Attention of one layer. Row i covers the group [i] + neighbors[i]: column 0 is
    the self entry, column c ≥ 1 is the neighbor g.neighbors[i, c - 1].
    """
    delta: Tensor  # N×(K+1) raw correlation δ
    omega: Tensor  # N×(K+1) normalized weight ω, rows sum to 1


class EncoderParams(NamedTuple):
    attention: List[Tensor]  # per layer, 2·d_l × 1
    self_weights: List[Dict[str, Tensor]]  # per layer, shared by all relations
    neighbor_weights: List[List[Dict[str, Tensor]]]  # per layer, per relation
    biases: List[Optional[Tensor]]
    variant: str = 'max_relative'
    self_term: str = 'averaged'
    leaky_slope: float = 0.01

    @property
    def layer_count(self) -> int:
        return len(self.attention)

    @classmethod
    def from_store(cls, store: ParamStore, cfg: ModelConfig) -> 'EncoderParams':
        variant = make_variant(cfg.variant)
        attention, self_weights, neighbor_weights, biases = [], [], [], []
        for layer, (d_in, d_out) in enumerate(cfg.layer_dims()):
            prefix = f'encoder.layer{layer}'
            att = store[f'{prefix}.attention']
            assert att.shape == (2 * d_in, 1), (att.shape, d_in)
            attention.append(att)
            self_weights.append(
                {name: store[f'{prefix}.{name}'] for name in variant.layer_shapes(d_in, d_out)})
            neighbor_weights.append([
                {name: store[f'{prefix}.rel{r}.{name}'] for name in variant.relation_shapes(d_in, d_out)}
                for r in range(cfg.num_relations)
            ])
            biases.append(store[f'{prefix}.bias'] if f'{prefix}.bias' in store else None)
        return cls(attention, self_weights, neighbor_weights, biases,
                   variant=cfg.variant, self_term=cfg.self_term, leaky_slope=cfg.leaky_slope)


def _groups(g: PatchGraph) -> np.ndarray:
    return np.concatenate([np.arange(g.num_nodes)[:, None], g.neighbors], axis=1)


def attention_scores(h: Tensor, g: PatchGraph, params: EncoderParams, layer: int,
                     training: bool = False, rng_seed=0,
                     dropout_rate: float = 0.0) -> AttentionField:
    """
    δᵢⱼ = dropout(leaky_relu(a·[hᵢ ⊕ hⱼ])) for j in [i] + neighbors[i], then ω is
    the softmax of δ within each node's group.
    """
    if not 0 <= layer < params.layer_count:
        raise UsageError(f'layer {layer} out of range for a {params.layer_count}-layer encoder')
    n, width = g.num_nodes, g.k + 1
    groups = _groups(g)
    owners = np.repeat(np.arange(n), width)

    pairs = concat([take(h, owners), take(h, groups.reshape(-1))], axis=-1)
    scores = reshape(pairs @ params.attention[layer], (-1, ))
    delta = dropout(leaky_relu(scores, params.leaky_slope), dropout_rate,
                    rng_seed, training=training)
    omega = softmax_over_groups(delta, owners)
    return AttentionField(delta=reshape(delta, (n, width)), omega=reshape(omega, (n, width)))


def gcn_layer(h: Tensor, g: PatchGraph, att: AttentionField, params: EncoderParams,
              layer: int) -> Tensor:
    """
    One attention-weighted relational graph convolution:

        hᵢ' = leaky_relu(Σ_r aggregate_r(ω_ii·hᵢ, {ω_ij·hⱼ : j a neighbor of i under r}))

    With the graph_sage variant the aggregate is ω_ii·hᵢ·W_self plus the mean of
    ω_ij·hⱼ·W_neighbor over the relation's neighbors.
    """
    if g.num_relations != len(params.neighbor_weights[layer]):
        raise ConfigError('graph has {} relations but the encoder was built for {}'.format(
            g.num_relations, len(params.neighbor_weights[layer])))
    n, d = h.shape
    variant = make_variant(params.variant)

    centre = mul(h, take(att.omega, np.array([0]), axis=1))
    weighted = mul(take(h, g.neighbors), reshape(take(att.omega, np.arange(1, g.k + 1), axis=1),
                                                 (n, g.k, 1)))

    total = None
    for r, rel_params in enumerate(params.neighbor_weights[layer]):
        cols = g.relation_columns(r)
        if cols.size == 0:
            raise StructuralError(f'relation {r} has an empty neighborhood')
        self_state = centre if params.self_term == 'averaged' else mul(centre, float(cols.size))
        out = variant.aggregate(self_state, take(weighted, cols, axis=1),
                                {**params.self_weights[layer], **rel_params})
        total = out if total is None else total + out

    if params.biases[layer] is not None:
        total = total + params.biases[layer]
    return leaky_relu(total, params.leaky_slope)


def encode(g: PatchGraph, params: EncoderParams, training: bool = False, seed=0,
           dropout_rate: float = 0.0, return_attention: bool = False):
    """
    Structural embeddings: layer_count attention + GCN layers over the
    (masked) node features. Attention is recomputed on every layer; the
    graph itself is fixed.
    """
    h = g.node_features
    fields = []
    for layer in range(params.layer_count):
        layer_seed = (*seed, layer) if isinstance(seed, tuple) else (seed, layer)
        att = attention_scores(h, g, params, layer, training=training,
                               rng_seed=layer_seed, dropout_rate=dropout_rate)
        h = gcn_layer(h, g, att, params, layer)
        fields.append(att)
    log.debug('encoded {} nodes through {} {} layers'.format(
        g.num_nodes, params.layer_count, params.variant))
    return (h, fields) if return_attention else h
