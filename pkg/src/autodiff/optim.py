"""
Optimizer Module for DeskBBF

AdamW with bias-corrected moments and decoupled weight decay, plus the
gradient-norm utilities used by the trainer.
"""

import logging
from collections import OrderedDict
from typing import Dict, Iterable, Optional

import numpy as np

from src.autodiff.parameters import ParameterSet

logger = logging.getLogger('deskbbf.autodiff.optim')


class AdamWState:
    """
    Per-parameter first/second moments and the hyperparameters of AdamW.
    """

    def __init__(self, params: ParameterSet, lr: float = 1e-4, beta1: float = 0.9,
                 beta2: float = 0.999, eps: float = 1.5e-4, weight_decay: float = 0.1):
        """
        Initialize optimizer state for a parameter set.

        Args:
            params: Parameters the moments are shaped after
            lr: Learning rate
            beta1: First moment decay
            beta2: Second moment decay
            eps: Denominator offset
            weight_decay: Decoupled decay coefficient (lambda)
        """
        if lr <= 0:
            raise ValueError(f"Learning rate must be positive, got {lr}")
        if weight_decay < 0:
            raise ValueError(f"Weight decay must be non-negative, got {weight_decay}")
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.weight_decay = weight_decay
        self.step_count = 0
        self.first_moment: 'OrderedDict[str, np.ndarray]' = OrderedDict(
            (name, np.zeros_like(t.data)) for name, t in params.items()
        )
        self.second_moment: 'OrderedDict[str, np.ndarray]' = OrderedDict(
            (name, np.zeros_like(t.data)) for name, t in params.items()
        )

    def reset_moments(self, names: Iterable[str]) -> None:
        for name in names:
            self.first_moment[name][...] = 0.0
            self.second_moment[name][...] = 0.0

    def rescale_moments(self, names: Iterable[str], factor: float) -> None:
        for name in names:
            self.first_moment[name] *= factor
            self.second_moment[name] *= factor

    def to_arrays(self) -> 'OrderedDict[str, np.ndarray]':
        arrays = OrderedDict()
        for name in self.first_moment:
            arrays[f"m.{name}"] = self.first_moment[name]
            arrays[f"v.{name}"] = self.second_moment[name]
        return arrays

    def load_arrays(self, arrays: Dict[str, np.ndarray], step_count: int) -> None:
        for name in self.first_moment:
            self.first_moment[name][...] = arrays[f"m.{name}"]
            self.second_moment[name][...] = arrays[f"v.{name}"]
        self.step_count = int(step_count)


def adamw_step(params: ParameterSet, state: AdamWState) -> None:
    """
    Apply one AdamW update in place.

    theta <- theta - lr * (m_hat / (sqrt(v_hat) + eps) + lambda * theta)

    Gradients are left untouched; the caller zeroes them.

    Args:
        params: Parameters whose `grad` arrays are populated
        state: Optimizer state, updated in place
    """
    missing = [name for name, t in params.items() if t.grad is None]
    if missing:
        raise ValueError(f"adamw_step: missing gradients for {missing[:5]}")

    state.step_count += 1
    correction1 = 1.0 - state.beta1 ** state.step_count
    correction2 = 1.0 - state.beta2 ** state.step_count

    for name, tensor in params.items():
        grad = tensor.grad
        m = state.first_moment[name]
        v = state.second_moment[name]
        m *= state.beta1
        m += (1.0 - state.beta1) * grad
        v *= state.beta2
        v += (1.0 - state.beta2) * grad * grad
        m_hat = m / correction1
        v_hat = v / correction2
        update = m_hat / (np.sqrt(v_hat) + state.eps) + state.weight_decay * tensor.data
        tensor.data -= (state.lr * update).astype(tensor.data.dtype, copy=False)


def global_grad_norm(params: ParameterSet) -> float:
    total = 0.0
    for _, tensor in params.items():
        if tensor.grad is not None:
            total += float(np.sum(tensor.grad.astype(np.float64) ** 2))
    return float(np.sqrt(total))


def clip_grad_norm(params: ParameterSet, max_norm: Optional[float]) -> float:
    """
    Scale gradients so their global norm is at most `max_norm`.

    Returns:
        The norm before clipping
    """
    norm = global_grad_norm(params)
    if max_norm and norm > max_norm:
        factor = max_norm / (norm + 1e-6)
        for _, tensor in params.items():
            if tensor.grad is not None:
                tensor.grad *= factor
    return norm
