"""
Sum-tree used for proportional prioritized sampling.

Leaves hold non-negative priorities; each internal node stores the sum of
its two children, recomputed (not incremented) on every write so totals
never drift.
"""

from typing import Iterable

import numpy as np


class SumTree:
    def __init__(self, capacity: int):
        if capacity < 1:
            raise ValueError(f"SumTree capacity must be >= 1, got {capacity}")
        self.capacity = capacity
        self.tree = np.zeros(2 * capacity - 1, dtype=np.float64)

    def _leaf(self, index: int) -> int:
        if not 0 <= index < self.capacity:
            raise IndexError(f"leaf index {index} outside [0, {self.capacity})")
        return index + self.capacity - 1

    def update(self, index: int, value: float) -> None:
        if value < 0 or not np.isfinite(value):
            raise ValueError(f"priority must be finite and non-negative, got {value}")
        node = self._leaf(index)
        self.tree[node] = value
        while node > 0:
            node = (node - 1) // 2
            self.tree[node] = self.tree[2 * node + 1] + self.tree[2 * node + 2]

    def get(self, index: int) -> float:
        return float(self.tree[self._leaf(index)])

    def leaves(self) -> np.ndarray:
        return self.tree[self.capacity - 1:]

    def total(self) -> float:
        return float(self.tree[0])

    def max_leaf(self) -> float:
        return float(self.leaves().max())

    def find(self, value: float) -> int:
        """Leaf index whose cumulative-priority interval contains `value`."""
        node = 0
        while node < self.capacity - 1:
            left = 2 * node + 1
            if value < self.tree[left] or self.tree[left + 1] <= 0.0:
                node = left
            else:
                value -= self.tree[left]
                node = left + 1
        return node - (self.capacity - 1)

    def load(self, leaves: Iterable[float]) -> None:
        values = np.asarray(list(leaves), dtype=np.float64)
        if values.shape != (self.capacity,):
            raise ValueError(f"expected {self.capacity} leaves, got {values.shape}")
        self.tree[self.capacity - 1:] = values
        for node in range(self.capacity - 2, -1, -1):
            self.tree[node] = self.tree[2 * node + 1] + self.tree[2 * node + 2]
