from typing import Dict, NamedTuple

import numpy as np

from .common import ConfigError
from .params import ParamStore


class AdamState(NamedTuple):
    m: np.ndarray
    v: np.ndarray
    step: int


class SGD:
    """Plain gradient descent with decoupled weight decay."""
    def __init__(self, params: ParamStore, lr: float, weight_decay: float = 0.0):
        if lr < 0 or weight_decay < 0:
            raise ConfigError('learning rate and weight decay must be non-negative')
        self.params = params
        self.lr = lr
        self.weight_decay = weight_decay
        self.steps: Dict[str, int] = {name: 0 for name in params}

    def _decay(self, t):
        if self.weight_decay:
            t.values *= 1.0 - self.lr * self.weight_decay

    def step(self):
        for name, t in self.params.items():
            self._decay(t)
            if t.grad is not None:
                t.values -= self.lr * t.grad
            self.steps[name] += 1

    def zero_grad(self):
        self.params.zero_grad()


class AdamW(SGD):
    """
    Adam with decoupled weight decay: p ← p·(1 − lr·wd), then the bias-corrected
    moment step. A parameter without a gradient is treated as having a zero
    gradient, so it still decays and its moments still advance.
    """
    def __init__(self, params: ParamStore, lr: float, weight_decay: float = 0.0,
                 betas=(0.9, 0.999), eps: float = 1e-8):
        super().__init__(params, lr, weight_decay)
        self.betas = betas
        self.eps = eps
        self.state: Dict[str, AdamState] = {
            name: AdamState(np.zeros_like(t.values), np.zeros_like(t.values), 0)
            for name, t in params.items()
        }

    def step(self):
        b1, b2 = self.betas
        for name, t in self.params.items():
            self._decay(t)
            grad = t.grad if t.grad is not None else np.zeros_like(t.values)
            m, v, step = self.state[name]
            step += 1
            m = b1 * m + (1 - b1) * grad
            v = b2 * v + (1 - b2) * grad * grad
            m_hat = m / (1 - b1**step)
            v_hat = v / (1 - b2**step)
            t.values -= self.lr * m_hat / (np.sqrt(v_hat) + self.eps)
            self.state[name] = AdamState(m, v, step)
            self.steps[name] = step


OPTIMIZERS = {'adamw': AdamW, 'sgd': SGD}


def make_optimizer(name: str, params: ParamStore, lr: float, weight_decay: float):
    if name not in OPTIMIZERS:
        raise ConfigError(f'unknown optimizer {name!r}, expected one of {sorted(OPTIMIZERS)}')
    return OPTIMIZERS[name](params, lr, weight_decay)
