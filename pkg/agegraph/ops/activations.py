import numpy as np

from ..common import ConfigError, make_rng
from .base_op import Op


class LeakyReluOp(Op):
    def __init__(self, slope=0.01):
        if not 0.0 < slope < 1.0:
            raise ConfigError(f'leaky_relu slope must lie in (0, 1), got {slope}')
        self.slope = slope

    def forward(self, x):
        self.factor = np.where(x > 0, 1.0, self.slope)
        return np.maximum(x, self.slope * x)

    def backward(self, grad):
        return (grad * self.factor, )


class DropoutOp(Op):
    """
    Inverted dropout: survivors are scaled by 1/(1-rate) at train time so
    that evaluation is the identity.
    """
    def __init__(self, rate, seed, training=True):
        if not 0.0 <= rate < 1.0:
            raise ConfigError(f'dropout rate must lie in [0, 1), got {rate}')
        self.rate = rate
        self.seed = seed
        self.training = training

    def forward(self, x):
        if not self.training or self.rate == 0.0:
            self.keep = None
            return x
        rng = make_rng(*self.seed) if isinstance(self.seed, tuple) else make_rng(self.seed)
        self.keep = (rng.random(x.shape) >= self.rate) / (1.0 - self.rate)
        return x * self.keep

    def backward(self, grad):
        if self.keep is None:
            return (grad, )
        return (grad * self.keep, )


class ReluOp(Op):
    """{x}+ = max(x, 0); subgradient 0 at the kink."""
    def forward(self, x):
        self.active = x > 0
        return np.where(self.active, x, 0.0)

    def backward(self, grad):
        return (grad * self.active, )


class NegPartOp(Op):
    """{x}- = min(x, 0); subgradient 0 at the kink."""
    def forward(self, x):
        self.active = x < 0
        return np.where(self.active, x, 0.0)

    def backward(self, grad):
        return (grad * self.active, )
