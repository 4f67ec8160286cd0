"""
Parameter Set Module for DeskBBF

A ParameterSet is the named, ordered collection of learnable tensors that
makes up one copy of a network (online, EMA target or random template).
"""

import logging
from collections import OrderedDict
from typing import Dict, Iterator, List, Optional, Tuple

import numpy as np

from src.autodiff.tensor import Tensor, ShapeError, get_dtype

logger = logging.getLogger('deskbbf.autodiff.parameters')


class ParameterSet:
    """
    Ordered map from hierarchical name (e.g. 'encoder.stage0.conv.weight') to Tensor.
    """

    def __init__(self, rng_seed: Optional[int] = None, trainable: bool = True):
        """
        Initialize an empty parameter set.

        Args:
            rng_seed: Seed used to draw the initial values
            trainable: Whether entries accumulate gradients
        """
        self.entries: 'OrderedDict[str, Tensor]' = OrderedDict()
        self.rng_seed = rng_seed
        self.trainable = trainable

    def add(self, name: str, values: np.ndarray) -> Tensor:
        if name in self.entries:
            raise ValueError(f"Duplicate parameter name: {name}")
        tensor = Tensor(values, requires_grad=self.trainable, name=name)
        self.entries[name] = tensor
        return tensor

    def __getitem__(self, name: str) -> Tensor:
        return self.entries[name]

    def __contains__(self, name: str) -> bool:
        return name in self.entries

    def __iter__(self) -> Iterator[str]:
        return iter(self.entries)

    def __len__(self) -> int:
        return len(self.entries)

    def items(self):
        return self.entries.items()

    def names(self) -> List[str]:
        return list(self.entries)

    def num_parameters(self, prefix: str = '') -> int:
        return sum(t.size for name, t in self.entries.items() if name.startswith(prefix))

    def shapes(self) -> Dict[str, Tuple[int, ...]]:
        return {name: t.shape for name, t in self.entries.items()}

    def is_congruent(self, other: 'ParameterSet') -> bool:
        return list(self.shapes().items()) == list(other.shapes().items())

    def check_congruent(self, other: 'ParameterSet') -> None:
        if self.names() != other.names():
            missing = set(self.names()) ^ set(other.names())
            raise ShapeError(f"Parameter sets differ in names: {sorted(missing)[:5]}")
        for name in self.entries:
            if self.entries[name].shape != other.entries[name].shape:
                raise ShapeError(
                    f"Parameter '{name}' has shape {self.entries[name].shape} "
                    f"but {other.entries[name].shape} in the other set"
                )

    def copy(self, trainable: Optional[bool] = None) -> 'ParameterSet':
        """Deep copy of values; gradients are not copied."""
        result = ParameterSet(self.rng_seed, self.trainable if trainable is None else trainable)
        for name, tensor in self.entries.items():
            result.add(name, tensor.data.copy())
        return result

    def assign(self, other: 'ParameterSet') -> None:
        """Overwrite values in place from a congruent set."""
        self.check_congruent(other)
        for name, tensor in self.entries.items():
            tensor.data[...] = other.entries[name].data

    def zero_grad(self) -> None:
        for tensor in self.entries.values():
            tensor.zero_grad()

    def to_arrays(self) -> 'OrderedDict[str, np.ndarray]':
        return OrderedDict((name, t.data) for name, t in self.entries.items())

    @classmethod
    def from_arrays(cls, arrays: Dict[str, np.ndarray], rng_seed: Optional[int] = None,
                    trainable: bool = True) -> 'ParameterSet':
        result = cls(rng_seed, trainable)
        for name, values in arrays.items():
            result.add(name, np.asarray(values, dtype=get_dtype()))
        return result

    def norm(self) -> float:
        """Global L2 norm of all values."""
        total = sum(float(np.sum(t.data.astype(np.float64) ** 2)) for t in self.entries.values())
        return float(np.sqrt(total))

    def __repr__(self) -> str:
        return f"ParameterSet({len(self)} entries, {self.num_parameters()} values)"
