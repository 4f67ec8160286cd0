"""
Architecture Module for DeskBBF

This module describes the width-scalable Impala-style network, draws fresh
parameter sets for it and renders the `describe` parameter table.
"""

import logging
from dataclasses import dataclass
from typing import Dict, List, Tuple

import numpy as np

from src.autodiff.parameters import ParameterSet
from src.autodiff.tensor import get_dtype

logger = logging.getLogger('deskbbf.network')

BLOCKS_PER_STAGE = 2


@dataclass
class ArchitectureSpec:
    """Shape and head configuration of the BBF network."""

    input_channels: int = 16
    input_height: int = 10
    input_width: int = 10
    num_actions: int = 5
    width_scale: int = 4
    base_channels: Tuple[int, int, int] = (16, 32, 32)
    hidden_dim: int = 512
    latent_dim: int = 512
    num_atoms: int = 51
    v_min: float = -10.0
    v_max: float = 10.0
    dueling: bool = True
    use_spr: bool = True
    spr_horizon: int = 5

    def __post_init__(self):
        self.base_channels = tuple(int(c) for c in self.base_channels)
        if self.width_scale < 1:
            raise ValueError(f"width_scale must be >= 1, got {self.width_scale}")
        if self.num_atoms < 2:
            raise ValueError(f"num_atoms must be >= 2, got {self.num_atoms}")
        if not self.v_min < self.v_max:
            raise ValueError(f"v_min ({self.v_min}) must be below v_max ({self.v_max})")
        if self.spr_horizon < 1:
            raise ValueError(f"spr_horizon must be >= 1, got {self.spr_horizon}")
        if self.num_actions < 1:
            raise ValueError(f"num_actions must be >= 1, got {self.num_actions}")
        if len(self.base_channels) != 3:
            raise ValueError(f"base_channels must have three entries, got {self.base_channels}")

    @property
    def stage_channels(self) -> Tuple[int, ...]:
        return tuple(c * self.width_scale for c in self.base_channels)

    def stage_spatial(self) -> List[Tuple[int, int]]:
        """Spatial size after each stage (3x3 max-pool, stride 2, padding 1)."""
        height, width = self.input_height, self.input_width
        sizes = []
        for _ in self.base_channels:
            height = (height - 1) // 2 + 1
            width = (width - 1) // 2 + 1
            sizes.append((height, width))
        return sizes

    @property
    def latent_shape(self) -> Tuple[int, int, int]:
        height, width = self.stage_spatial()[-1]
        return (self.stage_channels[-1], height, width)

    @property
    def feature_dim(self) -> int:
        channels, height, width = self.latent_shape
        return channels * height * width

    def atoms(self) -> np.ndarray:
        return np.linspace(self.v_min, self.v_max, self.num_atoms)


def _uniform(rng: np.random.Generator, shape: Tuple[int, ...], fan_in: int) -> np.ndarray:
    bound = 1.0 / np.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=shape).astype(get_dtype())


def _add_conv(params: ParameterSet, rng: np.random.Generator, name: str,
              in_channels: int, out_channels: int, zero: bool = False) -> None:
    shape = (out_channels, in_channels, 3, 3)
    weight = np.zeros(shape, dtype=get_dtype()) if zero else _uniform(rng, shape, in_channels * 9)
    params.add(f"{name}.weight", weight)
    params.add(f"{name}.bias", np.zeros(out_channels, dtype=get_dtype()))


def _add_linear(params: ParameterSet, rng: np.random.Generator, name: str,
                in_features: int, out_features: int) -> None:
    params.add(f"{name}.weight", _uniform(rng, (in_features, out_features), in_features))
    params.add(f"{name}.bias", np.zeros(out_features, dtype=get_dtype()))


def init_parameters(spec: ArchitectureSpec, seed: int, trainable: bool = True) -> ParameterSet:
    """
    Draw a fresh parameter set for `spec`.

    Convolutions and linear layers use fan-in scaled uniform weights and zero
    biases; the second convolution of every residual block starts at zero so
    new blocks are identity maps.

    Args:
        spec: Architecture description
        seed: Seed for the initialisation stream
        trainable: Whether the returned tensors accumulate gradients

    Returns:
        ParameterSet with deterministic entry order
    """
    rng = np.random.default_rng(seed)
    params = ParameterSet(rng_seed=seed, trainable=trainable)

    in_channels = spec.input_channels
    for stage, channels in enumerate(spec.stage_channels):
        prefix = f"encoder.stage{stage}"
        _add_conv(params, rng, f"{prefix}.conv", in_channels, channels)
        for block in range(BLOCKS_PER_STAGE):
            _add_conv(params, rng, f"{prefix}.block{block}.conv0", channels, channels)
            _add_conv(params, rng, f"{prefix}.block{block}.conv1", channels, channels, zero=True)
        in_channels = channels

    features = spec.feature_dim
    atoms = spec.num_atoms
    if spec.dueling:
        _add_linear(params, rng, 'head.value.hidden', features, spec.hidden_dim)
        _add_linear(params, rng, 'head.value.out', spec.hidden_dim, atoms)
        _add_linear(params, rng, 'head.advantage.hidden', features, spec.hidden_dim)
        _add_linear(params, rng, 'head.advantage.out', spec.hidden_dim, spec.num_actions * atoms)
    else:
        _add_linear(params, rng, 'head.q.hidden', features, spec.hidden_dim)
        _add_linear(params, rng, 'head.q.out', spec.hidden_dim, spec.num_actions * atoms)

    if spec.use_spr:
        channels = spec.latent_shape[0]
        _add_conv(params, rng, 'transition.conv0', channels + spec.num_actions, channels)
        _add_conv(params, rng, 'transition.conv1', channels, channels)
        _add_linear(params, rng, 'projection', features, spec.latent_dim)
        _add_linear(params, rng, 'prediction.hidden', spec.latent_dim, spec.latent_dim)
        _add_linear(params, rng, 'prediction.out', spec.latent_dim, spec.latent_dim)

    return params


def count_conv_layers(params: ParameterSet, prefix: str = 'encoder.') -> int:
    return sum(1 for name, t in params.items()
               if name.startswith(prefix) and name.endswith('.weight') and t.ndim == 4)


def describe(spec: ArchitectureSpec) -> Dict[str, object]:
    """
    Summarise parameter shapes and counts for `spec`.

    Returns:
        Dictionary with 'rows' (name, shape, count), 'groups' (top-level
        name to count), 'total', 'conv_layers' and a rendered 'text' table
    """
    params = init_parameters(spec, seed=0, trainable=False)
    rows = [(name, t.shape, t.size) for name, t in params.items()]
    groups: Dict[str, int] = {}
    for name, _, count in rows:
        group = name.split('.')[0]
        groups[group] = groups.get(group, 0) + count
    total = params.num_parameters()
    conv_layers = count_conv_layers(params)

    width = max(len(name) for name, _, _ in rows)
    lines = [
        f"input {spec.input_channels}x{spec.input_height}x{spec.input_width}  "
        f"width_scale {spec.width_scale}  stage channels {spec.stage_channels}  "
        f"latent {spec.latent_shape}",
        f"{'parameter'.ljust(width)}  {'shape':<18} {'count':>10}",
    ]
    for name, shape, count in rows:
        lines.append(f"{name.ljust(width)}  {str(tuple(shape)):<18} {count:>10}")
    for group, count in groups.items():
        lines.append(f"{('[' + group + ']').ljust(width)}  {'':<18} {count:>10}")
    lines.append(f"{'total'.ljust(width)}  {'':<18} {total:>10}")
    lines.append(f"encoder convolution layers: {conv_layers}")

    return {
        'rows': rows,
        'groups': groups,
        'total': total,
        'conv_layers': conv_layers,
        'text': '\n'.join(lines),
    }
