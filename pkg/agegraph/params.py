from collections import OrderedDict
from typing import Dict, Iterator, List, NamedTuple, Tuple

import numpy as np

from .common import ConfigError, glorot_uniform, make_rng
from .tensor import Tensor

SELF_TERMS = ('averaged', 'summed')


class ModelConfig(NamedTuple):
    embed_dim: int = 64  # width of the stem patch features
    hidden_dim: int = 64
    out_dim: int = 64  # width of every node embedding the losses compare
    layer_count: int = 2
    variant: str = 'max_relative'
    stem_channels: int = 16
    stem_kernel: int = 3
    anchor_hidden: int = 64
    leaky_slope: float = 0.01
    use_bias: bool = False
    self_term: str = 'averaged'
    gin_eps: float = 0.0
    num_relations: int = 1

    def validate(self):
        from .variants import VARIANTS
        for field in ('embed_dim', 'hidden_dim', 'out_dim', 'stem_channels',
                      'stem_kernel', 'anchor_hidden', 'num_relations'):
            if getattr(self, field) < 1:
                raise ConfigError(f'model.{field} must be positive')
        if self.layer_count < 0:
            raise ConfigError('model.layer_count must be non-negative')
        if self.layer_count == 0 and self.embed_dim != self.out_dim:
            raise ConfigError('with no GCN layers model.embed_dim must equal model.out_dim')
        if self.variant not in [v.name() for v in VARIANTS]:
            raise ConfigError('unknown graph conv variant {!r}, expected one of {}'.format(
                self.variant, [v.name() for v in VARIANTS]))
        if not 0.0 < self.leaky_slope < 1.0:
            raise ConfigError('model.leaky_slope must lie in (0, 1)')
        if self.self_term not in SELF_TERMS:
            raise ConfigError(f'model.self_term must be one of {SELF_TERMS}')

    def layer_dims(self) -> List[Tuple[int, int]]:
        dims = [self.embed_dim] + [self.hidden_dim] * (self.layer_count - 1) + [self.out_dim]
        return list(zip(dims[:-1], dims[1:])) if self.layer_count else []


PRESETS: Dict[str, Dict[str, int]] = {
    'tiny': dict(embed_dim=16, hidden_dim=16, out_dim=16, layer_count=1,
                 stem_channels=8, anchor_hidden=16),
    'small': dict(embed_dim=32, hidden_dim=32, out_dim=32, layer_count=2,
                  stem_channels=8, anchor_hidden=32),
    'base': dict(embed_dim=64, hidden_dim=64, out_dim=64, layer_count=2,
                 stem_channels=16, anchor_hidden=64),
}


def preset(name: str, **overrides) -> ModelConfig:
    if name not in PRESETS:
        raise ConfigError(f'unknown model preset {name!r}, expected one of {sorted(PRESETS)}')
    return ModelConfig(**{**PRESETS[name], **overrides})


class ParamStore:
    """
    Named, ordered collection of trainable tensors.
    """
    def __init__(self, tensors=None):
        self._tensors: 'OrderedDict[str, Tensor]' = OrderedDict()
        for name, value in (tensors or {}).items():
            self.add(name, value)

    def add(self, name: str, values) -> Tensor:
        assert name not in self._tensors, name
        t = values if isinstance(values, Tensor) else Tensor(np.array(values, dtype=np.float64))
        t.requires_grad = True
        t.name = name
        self._tensors[name] = t
        return t

    def __getitem__(self, name: str) -> Tensor:
        return self._tensors[name]

    def __contains__(self, name: str) -> bool:
        return name in self._tensors

    def __iter__(self) -> Iterator[str]:
        return iter(self._tensors)

    def __len__(self):
        return len(self._tensors)

    def items(self):
        return self._tensors.items()

    def group(self, prefix: str) -> Dict[str, Tensor]:
        """Tensors under `prefix.`, keyed by the rest of their name."""
        start = prefix + '.'
        return {k[len(start):]: v for k, v in self._tensors.items() if k.startswith(start)}

    def zero_grad(self):
        for t in self._tensors.values():
            t.zero_grad()

    def to_arrays(self) -> Dict[str, np.ndarray]:
        return {k: v.values.copy() for k, v in self._tensors.items()}

    @classmethod
    def from_arrays(cls, arrays: Dict[str, np.ndarray]) -> 'ParamStore':
        return cls({k: np.array(v, dtype=np.float64) for k, v in arrays.items()})


def init_params(cfg: ModelConfig, seed: int, label_mean: float = 0.0) -> ParamStore:
    """
    Seeded Glorot-uniform weights, zero biases. The age head weight starts at
    zero and its bias at `label_mean`, so an untrained model is the mean
    predictor.
    """
    from .variants import make_variant
    cfg.validate()
    rng = make_rng(seed)
    store = ParamStore()
    k, c, d = cfg.stem_kernel, cfg.stem_channels, cfg.embed_dim

    store.add('stem.conv1', glorot_uniform((k, k, 3, c), k * k * 3, k * k * c, rng))
    store.add('stem.conv2', glorot_uniform((k, k, c, d), k * k * c, k * k * d, rng))
    if cfg.use_bias:
        store.add('stem.bias1', np.zeros(c))
        store.add('stem.bias2', np.zeros(d))

    h = cfg.anchor_hidden
    store.add('anchor.fc1', glorot_uniform((d, h), d, h, rng))
    store.add('anchor.fc2', glorot_uniform((h, cfg.out_dim), h, cfg.out_dim, rng))
    if cfg.use_bias:
        store.add('anchor.bias1', np.zeros(h))
        store.add('anchor.bias2', np.zeros(cfg.out_dim))

    variant = make_variant(cfg.variant)
    for layer, (d_in, d_out) in enumerate(cfg.layer_dims()):
        prefix = f'encoder.layer{layer}'
        store.add(f'{prefix}.attention', glorot_uniform((2 * d_in, 1), 2 * d_in, 1, rng))
        for name, shape in variant.layer_shapes(d_in, d_out).items():
            store.add(f'{prefix}.{name}', variant.init(name, shape, cfg, rng))
        for r in range(cfg.num_relations):
            for name, shape in variant.relation_shapes(d_in, d_out).items():
                store.add(f'{prefix}.rel{r}.{name}', variant.init(name, shape, cfg, rng))
        if cfg.use_bias:
            store.add(f'{prefix}.bias', np.zeros(d_out))

    store.add('head.weight', np.zeros((cfg.out_dim, 1)))
    store.add('head.bias', np.array([label_mean]))
    return store