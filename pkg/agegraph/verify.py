"""
Finite-difference suite behind `agegraph gradcheck`: every differentiable op,
the encoder under each graph-conv variant, and the end-to-end training
objective, with and without the age term, on a two-image batch of four-node
graphs.
"""
import logging as log
from typing import Callable, List, NamedTuple, Sequence

import numpy as np

from . import ops
from .common import make_rng
from .contrastive import LossConfig
from .encoder import EncoderParams, encode
from .gradcheck import GradReport, check_gradients
from .graph import ImageSample, build_knn_graph
from .params import ModelConfig, init_params
from .tensor import Tensor
from .variants import VARIANTS

TOLERANCE = 1e-4


class GradCase(NamedTuple):
    name: str
    fn: Callable[..., Tensor]
    inputs: Sequence[Tensor]


class CaseResult(NamedTuple):
    name: str
    report: GradReport

    @property
    def ok(self) -> bool:
        return self.report.max_error <= TOLERANCE


def _readout(rng, shape):
    # a fixed random projection, so the scalar depends on every output element
    proj = Tensor(rng.normal(size=shape))
    return lambda out: ops.sum_(ops.mul(out, proj))


def _away_from_zero(rng, shape, margin=0.1):
    x = rng.normal(size=shape)
    return np.where(np.abs(x) < margin, np.sign(x + 1e-12) * margin, x)


def op_cases(seed: int = 0) -> List[GradCase]:
    rng = make_rng(seed, 0)
    t = lambda *shape: Tensor(rng.normal(size=shape))  # noqa: E731
    cases = []

    a, b = t(3, 4), t(4, 2)
    r = _readout(rng, (3, 2))
    cases.append(GradCase('matmul', lambda a, b, r=r: r(ops.matmul(a, b)), [a, b]))

    x = Tensor(_away_from_zero(rng, (7, )))
    r = _readout(rng, (7, ))
    cases.append(GradCase('leaky_relu', lambda x, r=r: r(ops.leaky_relu(x, 0.01)), [x]))
    cases.append(GradCase('relu', lambda x, r=r: r(ops.relu(x)), [x]))
    cases.append(GradCase('neg_part', lambda x, r=r: r(ops.neg_part(x)), [x]))

    s = t(7)
    groups = [[0, 1, 2], [3], [4, 5, 6]]
    cases.append(GradCase('softmax_over_groups',
                          lambda s, r=r: r(ops.softmax_over_groups(s, groups)), [s]))

    x = t(4, 5)
    r = _readout(rng, (4, 5))
    cases.append(GradCase('dropout', lambda x, r=r: r(ops.dropout(x, 0.5, (seed, 1))), [x]))

    image, kernels = t(5, 5, 2), t(3, 3, 2, 4)
    r = _readout(rng, (3, 3, 4))
    cases.append(GradCase('conv2d', lambda i, k, r=r: r(ops.conv2d(i, k)), [image, kernels]))

    p, q = t(4, 3), t(4, 3)
    r = _readout(rng, (4, ))
    cases.append(GradCase('row_distance_sq', lambda p, q, r=r: r(ops.row_distance_sq(p, q)), [p, q]))

    r = _readout(rng, (4, 6))
    cases.append(GradCase('concat', lambda p, q, r=r: r(ops.concat([p, q])), [p, q]))

    x = t(5, 3)
    index = np.array([[0, 2], [2, 4], [1, 1]])
    r = _readout(rng, (3, 2, 3))
    cases.append(GradCase('take', lambda x, r=r: r(ops.take(x, index)), [x]))

    r = _readout(rng, (2, 3))
    segments = np.array([0, 1, 0, 1, 1])
    cases.append(GradCase('segment_mean', lambda x, r=r: r(ops.segment_mean(x, segments)), [x]))

    # distinct values keep the max away from ties
    x = Tensor(rng.permutation(24).reshape(2, 4, 3) * 0.1)
    r = _readout(rng, (2, 3))
    cases.append(GradCase('max_over_neighbors', lambda x, r=r: r(ops.max_over_neighbors(x)), [x]))

    x, y = t(3, 4), t(3, 4)
    r = _readout(rng, (3, 4))
    cases.append(GradCase('mul_sub_add', lambda x, y, r=r: r((x - y) * y + x), [x, y]))
    cases.append(GradCase('mean', lambda x: ops.mean(ops.mul(x, x)), [x]))
    return cases


def encoder_cases(seed: int = 0, nodes: int = 6, K: int = 3, dim: int = 4) -> List[GradCase]:
    cases = []
    for variant in VARIANTS:
        rng = make_rng(seed, 2)
        cfg = ModelConfig(embed_dim=dim, hidden_dim=dim, out_dim=dim, layer_count=2,
                          variant=variant.name(), gin_eps=0.1)
        store = init_params(cfg, seed)
        features = Tensor(rng.normal(size=(nodes, dim)))
        graph = build_knn_graph(features, K)
        params = EncoderParams.from_store(store, cfg)
        r = _readout(rng, (nodes, dim))
        encoder_params = [v for k, v in store.items() if k.startswith('encoder.')]
        cases.append(GradCase(f'encode[{variant.name()}]',
                              lambda *_, g=graph, p=params, r=r: r(encode(g, p)),
                              [features] + encoder_params))
    return cases


def _patchwork(rng, size: int, patch: int) -> np.ndarray:
    # one flat tone per patch plus faint texture, so patch features stay far apart
    cells = size // patch
    tones = rng.uniform(0.15, 0.85, size=(cells, cells, 3))
    pixels = np.repeat(np.repeat(tones, patch, axis=0), patch, axis=1)
    return np.clip(pixels + rng.uniform(-0.1, 0.1, size=pixels.shape), 0.0, 1.0)


def end_to_end_case(seed: int = 0, age_loss_weight: float = 0.0) -> GradCase:
    """
    Training objective of one step (mask, dropout and negative draws fixed by
    the step seed) against every model parameter, on two images of four
    patches each.

    Every image node has all other nodes of its image as neighbors and every
    neighbor enters the neighbor positive, so the graph cannot change under a
    parameter perturbation. With `age_loss_weight` > 0 the head starts from
    random weights on standardized features and the labels sit far from any
    prediction.
    """
    from .training import AgeModel, TrainConfig, batch_loss

    rng = make_rng(seed, 3)
    model_cfg = ModelConfig(embed_dim=5, hidden_dim=5, out_dim=5, layer_count=2,
                            stem_channels=3, stem_kernel=3, anchor_hidden=5, leaky_slope=0.2)
    cfg = TrainConfig(image_size=12, patch_size=6, K=3, mask_rate=0.25, dropout=0.2,
                      age_loss_weight=age_loss_weight, model=model_cfg,
                      loss=LossConfig(neighbor_samples=3))
    labels = (5.0, 95.0)
    images = [ImageSample(_patchwork(rng, 12, 6), age, f'grad-{i}') for i, age in enumerate(labels)]
    store = init_params(model_cfg, seed, 50.0)
    model = AgeModel(store, cfg, 50.0, 1.0)
    name = 'end_to_end_loss'
    if age_loss_weight > 0:
        store['head.weight'].values[:] = rng.normal(size=(model_cfg.out_dim, 1))
        model = model._replace(feature_mean=rng.normal(scale=0.1, size=model_cfg.out_dim),
                               feature_scale=0.5)
        name = 'end_to_end_loss[age]'
    params = [v for _, v in store.items()]
    return GradCase(name, lambda *_: batch_loss(images, model, (seed, 0, 0))[0], params)


def gradient_suite(seed: int = 0) -> List[CaseResult]:
    cases = op_cases(seed) + encoder_cases(seed)
    cases += [end_to_end_case(seed), end_to_end_case(seed, age_loss_weight=1.0)]
    results = []
    for case in cases:
        report = check_gradients(case.fn, case.inputs)
        results.append(CaseResult(case.name, report))
        log.debug('{}: max relative error {:.2e}'.format(case.name, report.max_error))
    return results


def worst(results: Sequence[CaseResult]) -> CaseResult:
    return max(results, key=lambda r: r.report.max_error)
