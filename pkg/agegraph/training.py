import json
import logging as log
import os
from typing import Dict, List, NamedTuple, Optional, Sequence, Tuple

import numpy as np

from .common import (CheckpointError, ConfigError, DataError, UsageError,
                     make_rng)
from .config import tuple_from_dict, tuple_to_dict
from .contrastive import LossConfig, anchor_embed, loss_over_negatives, make_bundles
from .encoder import AttentionField, EncoderParams, encode
from .graph import (ImageSample, PatchGraph, apply_mask, build_knn_graph,
                    embed_patches, partition_image)
from .ops import abs_, mean, reshape, segment_mean
from .optim import make_optimizer
from .params import ModelConfig, ParamStore, init_params
from .tensor import ComputationTape, Tensor

CHECKPOINT_FORMAT = 'agegraph-checkpoint'
CHECKPOINT_VERSION = 1
DEFAULT_BATCH_SIZE = 196
SMALL_DATASET_BATCH_SIZE = 32
CS_LEVELS = tuple(range(11))

# stream ids for make_rng(seed, epoch, step, purpose)
SHUFFLE, MASK, ENCODER, ANCHOR, NEGATIVES, HEAD = range(6)


class TrainConfig(NamedTuple):
    epochs: int = 50
    batch_size: int = DEFAULT_BATCH_SIZE
    dropout: float = 0.5
    weight_decay: float = 1e-4
    learning_rate: float = 1e-4
    mask_rate: float = 0.6  # p
    K: int = 9
    patch_size: int = 8
    image_size: int = 64
    seed: int = 0
    age_loss_weight: float = 1.0
    optimizer: str = 'adamw'
    cs_inclusive: bool = True
    split_fractions: Tuple[float, float, float] = (0.8, 0.1, 0.1)
    loss: LossConfig = LossConfig()
    model: ModelConfig = ModelConfig()

    def validate(self):
        if self.epochs < 1:
            raise ConfigError(f'epochs must be at least 1, got {self.epochs}')
        if self.batch_size < 1:
            raise ConfigError(f'batch_size must be at least 1, got {self.batch_size}')
        if not 0.0 <= self.dropout < 1.0:
            raise ConfigError(f'dropout must lie in [0, 1), got {self.dropout}')
        if not 0.0 <= self.mask_rate <= 1.0:
            raise ConfigError(f'mask_rate must lie in [0, 1], got {self.mask_rate}')
        for field in ('weight_decay', 'learning_rate', 'age_loss_weight'):
            if getattr(self, field) < 0:
                raise ConfigError(f'{field} must be non-negative')
        if self.patch_size < 1 or self.image_size % self.patch_size:
            raise ConfigError(f'patch_size {self.patch_size} does not divide image_size {self.image_size}')
        nodes = (self.image_size // self.patch_size)**2
        if not 1 <= self.K < nodes:
            raise ConfigError(f'K must satisfy 1 <= K < {nodes} patches, got {self.K}')
        if self.model.stem_kernel * 2 - 1 > self.patch_size:
            raise ConfigError('patch_size is too small for two {0}×{0} stem convolutions'.format(
                self.model.stem_kernel))
        if self.model.num_relations > self.K:
            raise ConfigError('model.num_relations cannot exceed K')
        if self.loss.neighbor_samples > self.K:
            raise ConfigError('loss.neighbor_samples cannot exceed K')
        if len(self.split_fractions) != 3 or abs(sum(self.split_fractions) - 1.0) > 1e-9:
            raise ConfigError('split_fractions must be three fractions summing to 1')
        # an all-zero contrastive objective is allowed when the age loss carries training
        self.loss.validate(require_weight=self.age_loss_weight == 0)
        self.model.validate()

    def batch_size_for(self, n_train: int) -> int:
        if self.batch_size == DEFAULT_BATCH_SIZE and n_train < 1000:
            return SMALL_DATASET_BATCH_SIZE
        return self.batch_size


class Metrics(NamedTuple):
    mae: float
    cs: Dict[int, float]  # L (years) -> fraction of samples within L
    per_sample_errors: np.ndarray
    inclusive: bool = True

    def cs_at(self, level: float) -> float:
        errors = self.per_sample_errors
        within = errors <= level if self.inclusive else errors < level
        return float(np.mean(within)) if errors.size else 0.0


def compute_metrics(predictions, labels, levels=CS_LEVELS, inclusive: bool = True) -> Metrics:
    errors = np.abs(np.asarray(predictions, dtype=np.float64) - np.asarray(labels, dtype=np.float64))
    if errors.size == 0:
        raise UsageError('cannot compute metrics over an empty set')
    metrics = Metrics(float(np.mean(errors)), {}, errors, inclusive)
    return metrics._replace(cs={L: metrics.cs_at(L) for L in levels})


class AgeModel(NamedTuple):
    params: ParamStore
    config: TrainConfig
    label_mean: float = 0.0
    label_scale: float = 1.0
    # standardizes the pooled embedding ahead of the head; None leaves it raw
    feature_mean: Optional[np.ndarray] = None
    feature_scale: float = 1.0


class Checkpoint(NamedTuple):
    params: Dict[str, np.ndarray]
    config: TrainConfig
    epoch: int
    rng_state: dict
    label_mean: float = 0.0
    label_scale: float = 1.0
    steps: int = 0
    feature_mean: Optional[np.ndarray] = None
    feature_scale: float = 1.0

    def to_model(self) -> AgeModel:
        return AgeModel(ParamStore.from_arrays(self.params), self.config, self.label_mean,
                        self.label_scale, self.feature_mean, self.feature_scale)


class EpochLog(NamedTuple):
    epoch: int
    train_loss: float
    val_mae: float
    val_cs5: float


class BatchOutput(NamedTuple):
    graph: PatchGraph
    masked: PatchGraph
    features: Tensor  # stem patch features
    anchor: Tensor
    structural: Tensor  # encoder output
    predictions: Tensor  # one age per image
    attention: List[AttentionField]


def age_head(node_embeddings: Tensor, head_params: Dict[str, Tensor],
             segments: Optional[np.ndarray] = None, label_scale: float = 1.0,
             feature_mean: Optional[np.ndarray] = None, feature_scale: float = 1.0) -> Tensor:
    """
    b + s·(w·z) with z = (mean_rows(node_embeddings) − feature_mean) / feature_scale,
    or the raw row mean when `feature_mean` is None. Without `segments` the
    rows form one image and the result is a scalar; otherwise one prediction
    per segment.
    """
    if segments is None:
        pooled = mean(node_embeddings, axis=0, keepdims=True)
    else:
        pooled = segment_mean(node_embeddings, segments)
    if feature_mean is not None:
        pooled = (pooled - Tensor(np.reshape(feature_mean, (1, -1)))) / feature_scale
    pred = reshape(pooled @ head_params['weight'], (-1, )) * label_scale + head_params['bias']
    return reshape(pred, ()) if segments is None else pred


def _graph_for(samples: Sequence[ImageSample], model: AgeModel) -> Tuple[Tensor, PatchGraph]:
    cfg, store = model.config, model.params
    shapes = {s.pixels.shape for s in samples}
    if len(shapes) != 1:
        raise DataError(f'images in one batch must share a size, got {sorted(shapes)}')
    patches = [partition_image(s, cfg.patch_size) for s in samples]
    features = embed_patches(np.concatenate(patches), store.group('stem'), cfg.model.leaky_slope)
    segments = np.repeat(np.arange(len(samples)), patches[0].shape[0])
    return features, build_knn_graph(features, cfg.K, cfg.model.num_relations, segments)


def forward_batch(samples: Sequence[ImageSample], model: AgeModel, training: bool = False,
                  step_seed=(0, 0, 0)) -> BatchOutput:
    """
    Image batch → stem features, KNN graph, (masked) graph, structural and
    anchor embeddings, and one age per image.
    Evaluation never masks and never drops. The age head reads an unmasked
    encoding in training as in evaluation; with a non-empty mask that is a
    second encoder pass.
    """
    cfg, store = model.config, model.params
    features, graph = _graph_for(samples, model)
    masked = apply_mask(graph, cfg.mask_rate if training else 0.0, (*step_seed, MASK))
    rate = cfg.dropout if training else 0.0
    encoder_params = EncoderParams.from_store(store, cfg.model)

    structural, fields = encode(masked, encoder_params, training=training,
                                seed=(*step_seed, ENCODER), dropout_rate=rate, return_attention=True)
    anchor = anchor_embed(features, store.group('anchor'), training=training, rate=rate,
                          seed=(*step_seed, ANCHOR), slope=cfg.model.leaky_slope)

    head_input = structural
    if training and masked.mask_rows and cfg.age_loss_weight > 0:
        head_input = encode(graph, encoder_params, training=True, seed=(*step_seed, HEAD),
                            dropout_rate=rate)
    predictions = age_head(head_input, store.group('head'), graph.segment_ids, model.label_scale,
                           model.feature_mean, model.feature_scale)
    return BatchOutput(graph, masked, features, anchor, structural, predictions, fields)


def _labels(samples: Sequence[ImageSample]) -> np.ndarray:
    missing = [s.id for s in samples if s.age_label is None]
    if missing:
        raise DataError('missing age label for {}'.format(', '.join(missing[:5])))
    return np.array([s.age_label for s in samples], dtype=np.float64)


def batch_loss(samples: Sequence[ImageSample], model: AgeModel, step_seed) -> Tuple[Tensor, BatchOutput]:
    cfg = model.config
    labels = _labels(samples)
    out = forward_batch(samples, model, training=True, step_seed=step_seed)
    bundles = make_bundles(out.anchor, out.structural, out.masked, cfg.loss, (*step_seed, NEGATIVES))
    contrastive = loss_over_negatives(bundles, cfg.loss)
    age = mean(abs_(out.predictions - Tensor(labels)))
    return contrastive + cfg.age_loss_weight * age, out


def train_step(batch: Sequence[ImageSample], model: AgeModel, optimizer,
               step_seed=(0, 0, 0)) -> Tuple[float, ParamStore]:
    """
    One optimizer step on the batch objective: contrastive loss + age_loss_weight·L1 age loss, with every random
    draw keyed on `step_seed`.
    """
    if not batch:
        raise UsageError('train_step needs a non-empty batch')
    optimizer.zero_grad()
    tape = ComputationTape()
    with tape:
        loss, _ = batch_loss(batch, model, step_seed)
    tape.backward(loss)
    optimizer.step()
    return loss.item(), model.params


def predict(samples: Sequence[ImageSample], model: AgeModel, batch_size: int = 64) -> np.ndarray:
    preds = []
    for start in range(0, len(samples), batch_size):
        out = forward_batch(samples[start:start + batch_size], model, training=False)
        preds.append(out.predictions.values)
    return np.concatenate(preds) if preds else np.zeros(0)


def evaluate(samples: Sequence[ImageSample], model: AgeModel) -> Metrics:
    if not samples:
        raise UsageError('cannot evaluate on an empty dataset')
    labels = _labels(samples)
    predictions = predict(samples, model, model.config.batch_size_for(len(samples)))
    return compute_metrics(predictions, labels, inclusive=model.config.cs_inclusive)


def label_stats(samples: Sequence[ImageSample]) -> Tuple[float, float]:
    labels = _labels(samples)
    return float(np.mean(labels)), max(float(np.std(labels)), 1.0)


def feature_stats(samples: Sequence[ImageSample], model: AgeModel) -> Tuple[np.ndarray, float]:
    """
    Mean of the pooled evaluation-mode embedding over `samples`, and one
    scale for all features: the RMS deviation from that mean, or the RMS of
    the embedding itself when the images pool to the same point.
    """
    cfg = model.config
    batch_size = cfg.batch_size_for(len(samples))
    pooled = []
    for start in range(0, len(samples), batch_size):
        out = forward_batch(samples[start:start + batch_size], model, training=False)
        pooled.append(segment_mean(out.structural, out.graph.segment_ids).values)
    pooled = np.concatenate(pooled)
    centre = pooled.mean(axis=0)
    spread = float(np.sqrt(np.mean((pooled - centre)**2)))
    size = float(np.sqrt(np.mean(pooled**2)))
    if spread <= 1e-6 * size:
        spread = size
    if spread == 0.0:
        spread = 1.0
    log.debug('pooled embedding scale {:.3e} over {} images'.format(spread, len(samples)))
    return centre, spread


def run_training(train: Sequence[ImageSample], val: Sequence[ImageSample],
                 cfg: TrainConfig) -> Tuple[Checkpoint, List[EpochLog]]:
    """
    Epoch loop over seeded shuffles of `train`, evaluating on `val` after
    every epoch. Returns the checkpoint with the best validation MAE (the
    last epoch when there is no validation set) and the per-epoch log.
    """
    cfg.validate()
    if not train:
        raise UsageError('cannot train on an empty dataset')
    train_ids = {s.id for s in train}
    if any(s.id in train_ids for s in val):
        raise UsageError('train and validation splits overlap')

    label_mean, label_scale = label_stats(train)
    model = AgeModel(init_params(cfg.model, cfg.seed, label_mean), cfg, label_mean, label_scale)
    feature_mean, feature_scale = feature_stats(train, model)
    model = model._replace(feature_mean=feature_mean, feature_scale=feature_scale)
    optimizer = make_optimizer(cfg.optimizer, model.params, cfg.learning_rate, cfg.weight_decay)
    batch_size = cfg.batch_size_for(len(train))
    log.info('training on {} images ({} val), batch size {}, {} epochs'.format(
        len(train), len(val), batch_size, cfg.epochs))

    history: List[EpochLog] = []
    best: Optional[Checkpoint] = None
    steps = 0
    for epoch in range(1, cfg.epochs + 1):
        shuffle_rng = make_rng(cfg.seed, epoch, 0, SHUFFLE)
        rng_state = shuffle_rng.bit_generator.state
        order = shuffle_rng.permutation(len(train))

        losses = []
        for step, start in enumerate(range(0, len(train), batch_size)):
            batch = [train[i] for i in order[start:start + batch_size]]
            loss, _ = train_step(batch, model, optimizer, (cfg.seed, epoch, step))
            losses.append(loss)
            steps += 1

        if val:
            metrics = evaluate(val, model)
            val_mae, val_cs5 = metrics.mae, metrics.cs[5]
        else:
            val_mae = val_cs5 = float('nan')
        entry = EpochLog(epoch, float(np.mean(losses)), val_mae, val_cs5)
        history.append(entry)
        log.info('epoch {}: train loss {:.4f}, val MAE {:.3f}, val CS@5 {:.3f}'.format(*entry))

        if best is None or not val or val_mae < min(h.val_mae for h in history[:-1]):
            best = Checkpoint(model.params.to_arrays(), cfg, epoch, rng_state,
                              label_mean, label_scale, steps, feature_mean, feature_scale)

    return best, history


def _meta(ckpt: Checkpoint) -> dict:
    return {
        'format': CHECKPOINT_FORMAT,
        'version': CHECKPOINT_VERSION,
        'config': tuple_to_dict(ckpt.config),
        'epoch': ckpt.epoch,
        'rng_state': ckpt.rng_state,
        'label_mean': ckpt.label_mean,
        'label_scale': ckpt.label_scale,
        'steps': ckpt.steps,
        'feature_mean': None if ckpt.feature_mean is None else [float(v) for v in ckpt.feature_mean],
        'feature_scale': ckpt.feature_scale,
    }


def save_checkpoint(path: str, ckpt: Checkpoint):
    """
    Named arrays plus a JSON `__meta__` entry in one .npz. The file appears
    only once it is completely written.
    """
    tmp = path + '.tmp'
    try:
        with open(tmp, 'wb') as f:
            np.savez(f, __meta__=np.array(json.dumps(_meta(ckpt))), **ckpt.params)
        os.replace(tmp, path)
    finally:
        if os.path.exists(tmp):
            os.remove(tmp)
    log.debug('wrote checkpoint {} (epoch {})'.format(path, ckpt.epoch))


def load_checkpoint(path: str) -> Checkpoint:
    try:
        data = np.load(path, allow_pickle=False)
    except (OSError, ValueError) as e:
        raise CheckpointError(f'{path}: cannot read checkpoint ({e})')
    with data:
        if '__meta__' not in data.files:
            raise CheckpointError(f'{path}: not an agegraph checkpoint')
        meta = json.loads(str(data['__meta__']))
        params = {name: data[name] for name in data.files if name != '__meta__'}

    if meta.get('format') != CHECKPOINT_FORMAT:
        raise CheckpointError(f'{path}: not an agegraph checkpoint')
    if meta.get('version') != CHECKPOINT_VERSION:
        raise CheckpointError('{}: checkpoint version {} is not supported (expected {})'.format(
            path, meta.get('version'), CHECKPOINT_VERSION))
    try:
        config = tuple_from_dict(TrainConfig, meta['config'])
    except ConfigError as e:
        raise CheckpointError(f'{path}: stored config does not match this version: {e}')

    expected = init_params(config.model, 0)
    for name, tensor in expected.items():
        if name not in params or params[name].shape != tensor.shape:
            raise CheckpointError(f'{path}: parameter {name} is missing or has the wrong shape')
    extra = sorted(set(params) - set(expected))
    if extra:
        raise CheckpointError('{}: unexpected parameters {}'.format(path, extra))

    feature_mean = meta.get('feature_mean')
    if feature_mean is not None and len(feature_mean) != config.model.out_dim:
        raise CheckpointError(f'{path}: stored feature mean does not match model.out_dim')

    return Checkpoint(params, config, meta['epoch'], meta['rng_state'], meta['label_mean'],
                      meta['label_scale'], meta.get('steps', 0),
                      None if feature_mean is None else np.array(feature_mean, dtype=np.float64),
                      meta.get('feature_scale', 1.0))


def check_compatible(ckpt: Checkpoint, cfg: TrainConfig):
    """
    Raises CheckpointError when `cfg` asks for a model or graph that differs
    from the one the checkpoint was trained with.
    """
    for field in ('K', 'patch_size', 'image_size', 'model'):
        if getattr(ckpt.config, field) != getattr(cfg, field):
            raise CheckpointError('checkpoint was trained with {}={}, config asks for {}'.format(
                field, getattr(ckpt.config, field), getattr(cfg, field)))
