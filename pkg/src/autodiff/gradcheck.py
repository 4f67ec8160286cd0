"""
Finite-difference gradient checking for DeskBBF tests and diagnostics.
"""

from typing import Callable, Dict, Iterable, Optional

import numpy as np

from src.autodiff.tensor import Tensor, backward, precision


def numerical_gradient(loss_fn: Callable[[], Tensor], tensor: Tensor, h: float = 1e-5,
                       indices: Optional[Iterable[int]] = None) -> np.ndarray:
    """
    Central-difference estimate of d loss / d tensor.

    Args:
        loss_fn: Zero-argument function recomputing the scalar loss
        tensor: Tensor whose values are perturbed in place
        h: Perturbation size
        indices: Optional flat indices to probe (all when omitted)

    Returns:
        Array shaped like `tensor` with unprobed entries left at zero
    """
    flat = tensor.data.reshape(-1)
    estimate = np.zeros_like(flat)
    probe = range(flat.size) if indices is None else indices
    for i in probe:
        original = flat[i]
        flat[i] = original + h
        plus = loss_fn().item()
        flat[i] = original - h
        minus = loss_fn().item()
        flat[i] = original
        estimate[i] = (plus - minus) / (2.0 * h)
    return estimate.reshape(tensor.shape)


def relative_error(analytic: np.ndarray, numeric: np.ndarray, floor: float = 1e-6) -> float:
    scale = np.maximum(np.abs(analytic) + np.abs(numeric), floor)
    return float(np.max(np.abs(analytic - numeric) / scale))


def check_gradients(loss_fn: Callable[[], Tensor], tensors: Dict[str, Tensor], h: float = 1e-5,
                    max_probes: Optional[int] = None, seed: int = 0) -> Dict[str, float]:
    """
    Compare analytic and numerical gradients at 64-bit precision.

    Tensors must already hold float64 data (create them inside
    `precision('float64')`).

    Returns:
        Mapping of tensor name to maximum relative error over probed entries
    """
    rng = np.random.default_rng(seed)
    with precision('float64'):
        for tensor in tensors.values():
            tensor.zero_grad()
        backward(loss_fn())
        errors = {}
        for name, tensor in tensors.items():
            analytic = tensor.grad.copy()
            indices = None
            if max_probes is not None and tensor.size > max_probes:
                indices = rng.choice(tensor.size, size=max_probes, replace=False)
            numeric = numerical_gradient(loss_fn, tensor, h, indices)
            if indices is not None:
                analytic = analytic.reshape(-1)[indices]
                numeric = numeric.reshape(-1)[indices]
            errors[name] = relative_error(analytic, numeric)
    return errors
