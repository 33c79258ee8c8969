import logging as log
from typing import Any, List, NamedTuple, Optional, Tuple

import numpy as np

from .common import UsageError
from .contexts import active_tape, ctx_tape


class Tensor:
    """
    Dense float64 array with an optional gradient buffer.

    Tensors produced while a ComputationTape is active (and that depend on a
    tensor with requires_grad=True) are recorded on that tape; backward is run
    from the tape, not from the tensor.
    """
    def __init__(self, values, requires_grad: bool = False, name: Optional[str] = None):
        self.values = np.asarray(values, dtype=np.float64)
        self.grad: Optional[np.ndarray] = None
        self.requires_grad = requires_grad
        self.name = name

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.values.shape

    @property
    def ndim(self) -> int:
        return self.values.ndim

    @property
    def size(self) -> int:
        return self.values.size

    def item(self) -> float:
        if self.size != 1:
            raise UsageError(f'item() needs a single element, got shape {self.shape}')
        return float(self.values.reshape(-1)[0])

    def numpy(self) -> np.ndarray:
        return self.values.copy()

    def zero_grad(self):
        self.grad = None

    def accumulate_grad(self, grad):
        assert grad.shape == self.values.shape, (grad.shape, self.values.shape)
        if self.grad is None:
            self.grad = np.array(grad, dtype=np.float64)
        else:
            self.grad = self.grad + grad

    def detach(self):
        return Tensor(self.values, requires_grad=False, name=self.name)

    def __repr__(self):
        label = f' {self.name}' if self.name else ''
        return f'Tensor{label}(shape={self.shape}, requires_grad={self.requires_grad})'

    def __add__(self, other):
        from .ops import add
        return add(self, other)

    def __radd__(self, other):
        from .ops import add
        return add(self, other)

    def __sub__(self, other):
        from .ops import sub
        return sub(self, other)

    def __rsub__(self, other):
        from .ops import neg, add
        return add(neg(self), other)

    def __mul__(self, other):
        from .ops import mul
        return mul(self, other)

    def __rmul__(self, other):
        from .ops import mul
        return mul(self, other)

    def __truediv__(self, other):
        from .ops import scale
        if isinstance(other, Tensor):
            raise UsageError('division is only supported by a constant')
        return scale(self, 1.0 / other)

    def __neg__(self):
        from .ops import neg
        return neg(self)

    def __matmul__(self, other):
        from .ops import matmul
        return matmul(self, other)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


class TapeNode(NamedTuple):
    op: Any
    inputs: Tuple[Tensor, ...]
    output: Tensor


class ComputationTape:
    """
    Ordered record of executed differentiable operations.

    Nodes are appended as ops run, so the record is already in topological
    order. backward() walks it once in reverse.

        tape = ComputationTape()
        with tape:
            loss = f(x)
        tape.backward(loss)
    """
    def __init__(self):
        self.nodes: List[TapeNode] = []
        self.visits: List[int] = []
        self._ctx = None

    def record(self, op, inputs, output):
        self.nodes.append(TapeNode(op=op, inputs=tuple(inputs), output=output))
        self.visits.append(0)

    def __enter__(self):
        if active_tape() is not None:
            raise UsageError('a computation tape is already active in this context')
        self._ctx = ctx_tape.set(self)
        self._ctx.__enter__()
        return self

    def __exit__(self, *exc):
        # ContextVar.set only pops on a clean exit, so never forward the exception
        ctx, self._ctx = self._ctx, None
        ctx.__exit__(None, None, None)
        return False

    def __len__(self):
        return len(self.nodes)

    def backward(self, output: Tensor, grad=None):
        if grad is None:
            if output.size != 1:
                raise UsageError(
                    f'backward without an explicit gradient needs a scalar, got shape {output.shape}')
            grad = np.ones_like(output.values)
        output.accumulate_grad(np.asarray(grad, dtype=np.float64))

        for idx in reversed(range(len(self.nodes))):
            node = self.nodes[idx]
            if node.output.grad is None:
                continue
            self.visits[idx] += 1
            input_grads = node.op.backward(node.output.grad)
            for inp, g in zip(node.inputs, input_grads):
                if g is not None and inp.requires_grad:
                    inp.accumulate_grad(g)

        log.debug('backward visited {} of {} recorded ops'.format(
            sum(1 for v in self.visits if v > 0), len(self.nodes)))
