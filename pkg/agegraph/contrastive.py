import logging as log
from typing import Dict, List, NamedTuple, Optional

import numpy as np

from .common import ConfigError, make_rng
from .graph import PatchGraph
from .ops import (dropout, leaky_relu, mean, neg_part, relu, row_distance_sq,
                  segment_mean, take)
from .tensor import Tensor

__all__ = [
    'EmbeddingBundle', 'LossConfig', 'anchor_embed', 'negative_shuffle',
    'neighbor_positive', 'row_distance_sq', 'loss_triplet', 'loss_upper',
    'loss_components', 'loss_total', 'make_bundles', 'loss_over_negatives'
]


class LossConfig(NamedTuple):
    alpha: float = 0.8  # triplet margin
    beta: float = 0.2  # width of the upper bound above the margin
    w1: float = 1.0  # weight of the structural triplet term
    w2: float = 0.5  # weight of the neighbor triplet term
    w3: float = 0.5  # weight of the upper-bound term
    neighbor_samples: int = 5  # neighbors averaged per neighbor positive
    negative_count: int = 1  # row shuffles drawn per step

    def validate(self, require_weight: bool = True):
        if self.alpha <= 0 or self.beta <= 0:
            raise ConfigError('loss.alpha and loss.beta must be positive')
        if min(self.w1, self.w2, self.w3) < 0:
            raise ConfigError('loss weights must be non-negative')
        if require_weight and max(self.w1, self.w2, self.w3) == 0:
            raise ConfigError('at least one of loss.w1, loss.w2, loss.w3 must be positive')
        if self.neighbor_samples < 1:
            raise ConfigError('loss.neighbor_samples must be positive')
        if self.negative_count < 1:
            raise ConfigError('loss.negative_count must be positive')


class EmbeddingBundle(NamedTuple):
    anchor: Tensor
    structural_pos: Tensor  # encoder output
    neighbor_pos: Tensor  # neighbor means of structural_pos
    negative: Tensor
    permutation: np.ndarray  # negative[i] = anchor[permutation[i]]
    segments: Optional[np.ndarray] = None


def anchor_embed(patch_features: Tensor, mlp_params: Dict[str, Tensor], training: bool = False,
                 rate: float = 0.0, seed=0, slope: float = 0.01) -> Tensor:
    """
    Anchor embeddings dropout(leaky_relu(x·fc1))·fc2, row by row on the
    stem features, without touching the graph. `mlp_params` holds 'fc1',
    'fc2' and optionally 'bias1', 'bias2'.
    """
    x = patch_features @ mlp_params['fc1']
    if 'bias1' in mlp_params:
        x = x + mlp_params['bias1']
    x = dropout(leaky_relu(x, slope), rate, seed, training=training)
    x = x @ mlp_params['fc2']
    if 'bias2' in mlp_params:
        x = x + mlp_params['bias2']
    return x


def _derangement(n: int, rng) -> np.ndarray:
    # rejection sampling keeps the draw uniform over derangements
    while True:
        perm = rng.permutation(n)
        if not np.any(perm == np.arange(n)):
            return perm


def negative_shuffle(h: Tensor, rng_seed, segments: Optional[np.ndarray] = None):
    """
    Negative embeddings: the rows of h under a seeded derangement. With
    `segments`, rows are only shuffled within their own image.
    """
    rng = make_rng(*rng_seed) if isinstance(rng_seed, tuple) else make_rng(rng_seed)
    n = h.shape[0]
    segments = np.zeros(n, dtype=np.int64) if segments is None else np.asarray(segments)

    perm = np.empty(n, dtype=np.int64)
    for s in np.unique(segments):
        rows = np.flatnonzero(segments == s)
        if rows.size < 2:
            raise ConfigError(f'cannot draw a negative from an image with {rows.size} node')
        perm[rows] = rows[_derangement(rows.size, rng)]
    return take(h, perm), perm


def neighbor_positive(h_struct: Tensor, g: PatchGraph, n: int, rng_seed) -> Tensor:
    """
    Neighbor positives: row i is the mean of n of its neighbors' rows of
    h_struct, drawn uniformly without replacement.
    """
    if not 1 <= n <= g.k:
        raise ConfigError(f'neighbor sample count must lie in [1, K={g.k}], got {n}')
    rng = make_rng(*rng_seed) if isinstance(rng_seed, tuple) else make_rng(rng_seed)
    picks = np.argsort(rng.random(g.neighbors.shape), axis=1)[:, :n]
    chosen = np.take_along_axis(g.neighbors, picks, axis=1)
    return mean(take(h_struct, chosen), axis=1)


def _row_mean(values: Tensor, segments: Optional[np.ndarray]) -> Tensor:
    if segments is None:
        return mean(values)
    return mean(segment_mean(values, segments))


def loss_triplet(anchor: Tensor, positive: Tensor, negative: Tensor, alpha: float,
                 segments: Optional[np.ndarray] = None) -> Tensor:
    """mean_i {d(h,pos)ᵢ² − d(h,neg)ᵢ² + α}₊"""
    gap = row_distance_sq(anchor, positive) - row_distance_sq(anchor, negative)
    return _row_mean(relu(gap + alpha), segments)


def loss_upper(anchor: Tensor, positive: Tensor, negative: Tensor, alpha: float, beta: float,
               segments: Optional[np.ndarray] = None) -> Tensor:
    """
    −mean_i {d(h,pos)ᵢ² − d(h,neg)ᵢ² + α + β}₋, zero exactly when every row has
    d(h,neg)² ≤ d(h,pos)² + α + β.
    """
    gap = row_distance_sq(anchor, positive) - row_distance_sq(anchor, negative)
    return -_row_mean(neg_part(gap + (alpha + beta)), segments)


def loss_components(bundle: EmbeddingBundle, cfg: LossConfig) -> Dict[str, Tensor]:
    h, neg, seg = bundle.anchor, bundle.negative, bundle.segments
    return {
        'l_n': loss_triplet(h, bundle.structural_pos, neg, cfg.alpha, seg),
        'l_m': loss_triplet(h, bundle.neighbor_pos, neg, cfg.alpha, seg),
        'l_v': loss_upper(h, bundle.structural_pos, neg, cfg.alpha, cfg.beta, seg),
    }


def loss_total(bundle: EmbeddingBundle, cfg: LossConfig) -> Tensor:
    parts = loss_components(bundle, cfg)
    return cfg.w1 * parts['l_n'] + cfg.w2 * parts['l_m'] + cfg.w3 * parts['l_v']


def make_bundles(anchor: Tensor, h_struct: Tensor, g: PatchGraph, cfg: LossConfig,
                 seed) -> List[EmbeddingBundle]:
    """
    One bundle per negative draw; the neighbor positives are sampled once and shared.
    """
    key = seed if isinstance(seed, tuple) else (seed, )
    h_tilde = neighbor_positive(h_struct, g, cfg.neighbor_samples, key + (0, ))
    bundles = []
    for draw in range(cfg.negative_count):
        negative, perm = negative_shuffle(anchor, key + (1, draw), g.segments)
        bundles.append(EmbeddingBundle(anchor, h_struct, h_tilde, negative, perm, g.segments))
    log.debug('drew {} negative shuffles over {} rows'.format(cfg.negative_count, anchor.shape[0]))
    return bundles


def loss_over_negatives(bundles: List[EmbeddingBundle], cfg: LossConfig) -> Tensor:
    total = loss_total(bundles[0], cfg)
    for bundle in bundles[1:]:
        total = total + loss_total(bundle, cfg)
    return total / len(bundles)
