import logging as log
from typing import Callable, NamedTuple, Sequence, Tuple

import numpy as np

from .common import UsageError
from .tensor import ComputationTape, Tensor


class GradReport(NamedTuple):
    max_error: float
    input_index: int
    element: Tuple[int, ...]
    analytic: float
    numeric: float


def _scalar(out, what):
    if not isinstance(out, Tensor) or out.size != 1:
        shape = out.shape if isinstance(out, Tensor) else type(out).__name__
        raise UsageError(f'{what} must return a scalar tensor, got {shape}')
    return out.item()


def check_gradients(fn: Callable[..., Tensor], inputs: Sequence[Tensor],
                    eps: float = 1e-5) -> GradReport:
    """
    Compares tape gradients of a scalar function against central differences
    and reports the worst element by

        |analytic - numeric| / max(|analytic|, |numeric|, 1e-8)

    fn must be deterministic: any randomness inside it needs a fixed seed.
    """
    if eps <= 0:
        raise UsageError(f'eps must be positive, got {eps}')

    for t in inputs:
        t.requires_grad = True
        t.zero_grad()

    tape = ComputationTape()
    with tape:
        out = fn(*inputs)
    _scalar(out, 'grad_check function')
    tape.backward(out)

    worst = GradReport(0.0, -1, (), 0.0, 0.0)
    for i, t in enumerate(inputs):
        analytic = t.grad if t.grad is not None else np.zeros_like(t.values)
        for idx in np.ndindex(*t.shape):
            orig = t.values[idx]
            t.values[idx] = orig + eps
            plus = _scalar(fn(*inputs), 'grad_check function')
            t.values[idx] = orig - eps
            minus = _scalar(fn(*inputs), 'grad_check function')
            t.values[idx] = orig

            numeric = (plus - minus) / (2 * eps)
            a = float(analytic[idx])
            err = abs(a - numeric) / max(abs(a), abs(numeric), 1e-8)
            if err > worst.max_error or worst.input_index < 0:
                worst = GradReport(err, i, tuple(idx), a, numeric)

    log.debug('grad check: worst error {:.3e} at input {} element {}'.format(
        worst.max_error, worst.input_index, worst.element))
    return worst


def grad_check(fn: Callable[..., Tensor], inputs: Sequence[Tensor],
               eps: float = 1e-5) -> float:
    return check_gradients(fn, inputs, eps).max_error
