"""
Tensor Module for DeskBBF

This module defines the dense Tensor used by every learning component,
the reverse-mode tape that connects tensors produced by differentiable
operations, and the process-wide precision switch.
"""

import logging
import contextlib
from typing import Callable, Dict, Iterator, List, Optional, Sequence, Tuple

import numpy as np

logger = logging.getLogger('deskbbf.autodiff')

_PRECISIONS = {
    'float32': np.float32,
    'float64': np.float64,
}

_state = {
    'dtype': np.float32,
    'grad_enabled': True,
}


class ShapeError(ValueError):
    """Raised when operand shapes are incompatible."""


class NumericFaultError(ArithmeticError):
    """Raised when an operation produces NaN or Inf."""

    def __init__(self, op_name: str, detail: str = ''):
        self.op_name = op_name
        message = f"Non-finite values produced by '{op_name}'"
        if detail:
            message += f": {detail}"
        super().__init__(message)


class TapeError(RuntimeError):
    """Raised when backward is requested on a detached or invalid tape."""


def set_precision(name: str) -> None:
    """
    Select the floating point precision for newly created tensors.

    Args:
        name: 'float32' (training default) or 'float64' (gradient checks)
    """
    if name not in _PRECISIONS:
        raise ValueError(f"Unknown precision: {name} (expected one of {sorted(_PRECISIONS)})")
    _state['dtype'] = _PRECISIONS[name]
    logger.debug(f"Precision set to {name}")


def get_dtype():
    """Return the numpy dtype used for new tensors."""
    return _state['dtype']


@contextlib.contextmanager
def precision(name: str) -> Iterator[None]:
    """Temporarily switch precision inside a `with` block."""
    previous = _state['dtype']
    set_precision(name)
    try:
        yield
    finally:
        _state['dtype'] = previous


@contextlib.contextmanager
def no_grad() -> Iterator[None]:
    """Disable tape recording inside a `with` block."""
    previous = _state['grad_enabled']
    _state['grad_enabled'] = False
    try:
        yield
    finally:
        _state['grad_enabled'] = previous


def is_grad_enabled() -> bool:
    return _state['grad_enabled']


def check_finite(values: np.ndarray, op_name: str) -> None:
    """Raise NumericFaultError if `values` holds NaN or Inf."""
    if not np.all(np.isfinite(values)):
        bad = int(np.size(values) - np.count_nonzero(np.isfinite(values)))
        raise NumericFaultError(op_name, f"{bad} of {np.size(values)} entries")


class Tensor:
    """
    Dense n-dimensional array with optional participation in the gradient tape.

    Leaf tensors created with requires_grad=True own a `grad` accumulator of
    the same shape. Tensors produced by operations keep references to their
    parents and a backward closure; their gradients are only held transiently
    while `backward` runs.
    """

    __array_priority__ = 100

    def __init__(self, data, requires_grad: bool = False, name: Optional[str] = None):
        """
        Initialize a tensor.

        Args:
            data: Array-like values
            requires_grad: Whether gradients should be accumulated for this tensor
            name: Optional label used in error messages and checkpoints
        """
        self.data = np.array(data, dtype=get_dtype(), copy=True)
        self.requires_grad = bool(requires_grad)
        self.name = name
        self.grad = np.zeros_like(self.data) if self.requires_grad else None
        self._parents: Tuple['Tensor', ...] = ()
        self._backward: Optional[Callable[[np.ndarray], Sequence[Optional[np.ndarray]]]] = None
        self._op = 'leaf'

    @classmethod
    def from_op(cls, data: np.ndarray, parents: Sequence['Tensor'],
                backward: Callable[[np.ndarray], Sequence[Optional[np.ndarray]]],
                op_name: str) -> 'Tensor':
        """
        Build the output of a differentiable operation.

        The result is tape-connected only when recording is enabled and at
        least one parent requires a gradient.
        """
        check_finite(data, op_name)
        out = cls.__new__(cls)
        out.data = np.asarray(data, dtype=get_dtype())
        out.name = None
        out.grad = None
        out._op = op_name
        tracked = is_grad_enabled() and any(p.requires_grad for p in parents)
        out.requires_grad = tracked
        if tracked:
            out._parents = tuple(parents)
            out._backward = backward
        else:
            out._parents = ()
            out._backward = None
        return out

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return int(self.data.size)

    @property
    def is_leaf(self) -> bool:
        return self._backward is None

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        if self.data.size != 1:
            raise ShapeError(f"item() requires a single-element tensor, got shape {self.shape}")
        return float(self.data.reshape(-1)[0])

    def detach(self) -> 'Tensor':
        """Return a tensor sharing values but cut from the tape."""
        out = Tensor.__new__(Tensor)
        out.data = self.data
        out.requires_grad = False
        out.grad = None
        out.name = self.name
        out._parents = ()
        out._backward = None
        out._op = 'detach'
        return out

    def zero_grad(self) -> None:
        if self.requires_grad:
            self.grad = np.zeros_like(self.data)

    def __repr__(self) -> str:
        label = f", name={self.name!r}" if self.name else ''
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad}{label})"

    # Operator sugar; implementations live in ops.py
    def __add__(self, other):
        from src.autodiff import ops
        return ops.add(self, ops.as_tensor(other))

    __radd__ = __add__

    def __sub__(self, other):
        from src.autodiff import ops
        return ops.sub(self, ops.as_tensor(other))

    def __rsub__(self, other):
        from src.autodiff import ops
        return ops.sub(ops.as_tensor(other), self)

    def __mul__(self, other):
        from src.autodiff import ops
        if isinstance(other, (int, float)):
            return ops.scale(self, float(other))
        return ops.mul(self, ops.as_tensor(other))

    __rmul__ = __mul__

    def __neg__(self):
        from src.autodiff import ops
        return ops.scale(self, -1.0)

    def __matmul__(self, other):
        from src.autodiff import ops
        return ops.matmul(self, ops.as_tensor(other))


def _topological_order(root: Tensor) -> List[Tensor]:
    order: List[Tensor] = []
    visited = set()
    stack = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in visited:
            continue
        visited.add(id(node))
        stack.append((node, True))
        for parent in node._parents:
            if id(parent) not in visited:
                stack.append((parent, False))
    return order


def backward(loss: Tensor) -> None:
    """
    Populate gradients of every leaf reachable from a scalar loss.

    Gradients accumulate into existing `grad` arrays; callers zero them
    explicitly between steps.

    Args:
        loss: Scalar tensor produced with recording enabled
    """
    if loss.size != 1:
        raise TapeError(f"backward requires a scalar loss, got shape {loss.shape}")
    if not loss.requires_grad:
        raise TapeError("loss is detached from the tape (no input requires a gradient)")

    order = _topological_order(loss)
    pending: Dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}

    for node in reversed(order):
        grad = pending.pop(id(node), None)
        if grad is None:
            continue
        if node.is_leaf:
            if node.requires_grad:
                check_finite(grad, f"backward:{node.name or 'leaf'}")
                if node.grad is None:
                    node.grad = np.zeros_like(node.data)
                node.grad += grad.astype(node.data.dtype, copy=False)
            continue
        parent_grads = node._backward(grad)
        for parent, parent_grad in zip(node._parents, parent_grads):
            if parent_grad is None or not parent.requires_grad:
                continue
            if parent_grad.shape != parent.data.shape:
                raise ShapeError(
                    f"gradient shape {parent_grad.shape} does not match "
                    f"input shape {parent.data.shape} in '{node._op}'"
                )
            key = id(parent)
            if key in pending:
                pending[key] = pending[key] + parent_grad
            else:
                pending[key] = parent_grad
