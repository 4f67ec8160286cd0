"""
Categorical Support Module for DeskBBF

Fixed atom supports and the projection of shifted target distributions back
onto them.
"""

import numpy as np


class CategoricalSupport:
    """Evenly spaced atoms z_0 = v_min, ..., z_{m-1} = v_max."""

    def __init__(self, v_min: float = -10.0, v_max: float = 10.0, num_atoms: int = 51):
        if num_atoms < 2:
            raise ValueError(f"num_atoms must be >= 2, got {num_atoms}")
        if not v_min < v_max:
            raise ValueError(f"v_min ({v_min}) must be below v_max ({v_max})")
        self.v_min = float(v_min)
        self.v_max = float(v_max)
        self.num_atoms = int(num_atoms)
        self.atoms = np.linspace(self.v_min, self.v_max, self.num_atoms)
        self.delta_z = (self.v_max - self.v_min) / (self.num_atoms - 1)

    @classmethod
    def from_spec(cls, spec) -> 'CategoricalSupport':
        return cls(spec.v_min, spec.v_max, spec.num_atoms)

    def __repr__(self) -> str:
        return f"CategoricalSupport([{self.v_min}, {self.v_max}], atoms={self.num_atoms})"


def categorical_projection(target_probs: np.ndarray, shifted_atoms: np.ndarray,
                           support: CategoricalSupport) -> np.ndarray:
    """
    Project distributions living on shifted atoms onto `support`.

    Each shifted atom is clipped to [v_min, v_max] and its mass is split
    linearly between the two neighbouring support atoms.

    Args:
        target_probs: (B, m) probabilities, rows summing to one
        shifted_atoms: (B, m) locations G + gamma^n * z_j of those probabilities
        support: Destination support with m atoms

    Returns:
        (B, m) float64 probabilities on the support
    """
    probs = np.asarray(target_probs, dtype=np.float64)
    shifted = np.asarray(shifted_atoms, dtype=np.float64)
    if probs.shape != shifted.shape or probs.ndim != 2:
        raise ValueError(f"target_probs {probs.shape} and shifted_atoms {shifted.shape} must be equal (B, m)")

    last = support.num_atoms - 1
    position = (np.clip(shifted, support.v_min, support.v_max) - support.v_min) / support.delta_z
    position = np.clip(position, 0.0, float(last))
    lower = np.floor(position).astype(np.int64)
    upper = np.minimum(lower + 1, last)
    upper_weight = position - lower
    lower_weight = 1.0 - upper_weight

    rows = np.repeat(np.arange(probs.shape[0]), probs.shape[1])
    projected = np.zeros((probs.shape[0], support.num_atoms), dtype=np.float64)
    np.add.at(projected, (rows, lower.reshape(-1)), (probs * lower_weight).reshape(-1))
    np.add.at(projected, (rows, upper.reshape(-1)), (probs * upper_weight).reshape(-1))
    return projected
