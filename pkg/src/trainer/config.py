"""
Agent Configuration Module for DeskBBF

This module defines AgentConfig, the named presets (BBF, its ablation arms
and the baseline) and the flat `key = value` file format used by the
command line. Values are typed with yaml.safe_load.
"""

import os
import logging
from dataclasses import asdict, dataclass, field, fields, replace
from typing import Any, Dict, Iterable, List, Optional, Tuple

import yaml

from src.network.architecture import ArchitectureSpec
from src.schedules.schedule import ScheduleConfig
from src.utils.security import SecurityManager

logger = logging.getLogger('deskbbf.config')


class ConfigError(ValueError):
    """Raised for unknown keys and invalid values; the message names the key."""

    def __init__(self, key: str, message: str):
        self.key = key
        super().__init__(f"{key}: {message}")


@dataclass
class AgentConfig:
    """Everything needed to reproduce one training run."""

    name: str = 'bbf'
    env: str = 'chase'
    seed: int = 0
    arch: ArchitectureSpec = field(
        default_factory=lambda: ArchitectureSpec(width_scale=2, hidden_dim=256, latent_dim=256))
    schedule: ScheduleConfig = field(default_factory=ScheduleConfig)

    learning_rate: float = 1e-4
    weight_decay: float = 0.1
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1.5e-4
    max_grad_norm: float = 10.0

    batch_size: int = 32
    ema_tau: float = 0.995
    alpha_encoder: float = 0.5
    spr_weight: float = 2.0
    double_q: bool = True
    augmentation: bool = True

    replay_capacity: int = 100_000
    stack_depth: int = 4
    prioritized: bool = True
    priority_exponent: float = 0.5
    importance_exponent: float = 0.5

    sticky_prob: float = 0.0
    total_env_steps: int = 10_000
    eval_every: int = 2_500
    eval_episodes: int = 10
    eval_epsilon: float = 0.001
    checkpoint_every_episodes: int = 10
    precision: str = 'float32'

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        if not 0.0 <= self.alpha_encoder <= 1.0:
            raise ConfigError('alpha_encoder', f"must lie in [0, 1], got {self.alpha_encoder}")
        if self.batch_size < 1:
            raise ConfigError('batch_size', f"must be >= 1, got {self.batch_size}")
        if not 0.0 <= self.ema_tau <= 1.0:
            raise ConfigError('ema_tau', f"must lie in [0, 1], got {self.ema_tau}")
        if self.learning_rate <= 0:
            raise ConfigError('learning_rate', f"must be positive, got {self.learning_rate}")
        if self.weight_decay < 0:
            raise ConfigError('weight_decay', f"must be non-negative, got {self.weight_decay}")
        if self.spr_weight < 0:
            raise ConfigError('spr_weight', f"must be non-negative, got {self.spr_weight}")
        if self.stack_depth < 1:
            raise ConfigError('stack_depth', f"must be >= 1, got {self.stack_depth}")
        if self.replay_capacity < self.batch_size:
            raise ConfigError('replay_capacity', f"must hold at least one batch ({self.batch_size})")
        if not 0.0 <= self.sticky_prob <= 1.0:
            raise ConfigError('sticky_prob', f"must lie in [0, 1], got {self.sticky_prob}")
        if not 0.0 <= self.eval_epsilon <= 1.0:
            raise ConfigError('eval_epsilon', f"must lie in [0, 1], got {self.eval_epsilon}")
        if self.eval_episodes < 0 or self.eval_every < 0:
            raise ConfigError('eval_every', "evaluation cadence and episodes must be non-negative")
        longest = self.schedule.fixed_n or self.schedule.n_start
        if self.schedule.warmup_steps <= longest:
            raise ConfigError('schedule.warmup_steps',
                              f"must exceed the longest update horizon ({longest}), got {self.schedule.warmup_steps}")
        if self.precision not in ('float32', 'float64'):
            raise ConfigError('precision', f"must be float32 or float64, got {self.precision}")

    def architecture(self, frame_channels: int, height: int, width: int, num_actions: int) -> ArchitectureSpec:
        """The configured architecture with input and action sizes taken from the environment."""
        return replace(self.arch, input_channels=frame_channels * self.stack_depth,
                       input_height=height, input_width=width, num_actions=num_actions)

    @property
    def run_name(self) -> str:
        return SecurityManager().run_name(self.env, self.name, self.seed)


SECTIONS = {'arch': ArchitectureSpec, 'schedule': ScheduleConfig}

ALIASES = {
    'rr': 'schedule.replay_ratio',
    'lr': 'learning_rate',
    'tau': 'ema_tau',
    'alpha': 'alpha_encoder',
    'env_steps': 'total_env_steps',
}

# desk-scale defaults are the dataclass defaults; presets apply on top of them
PRESETS: Dict[str, Dict[str, Any]] = {
    'bbf': {},
    'bbf_canonical': {
        'arch.hidden_dim': 512,
        'arch.latent_dim': 512,
        'arch.width_scale': 4,
        'schedule.anneal_steps': 10_000,
        'schedule.reset_period': 40_000,
        'schedule.replay_ratio': 8.0,
        'schedule.warmup_steps': 2_000,
        'total_env_steps': 100_000,
        'eval_every': 25_000,
    },
    'sr_spr': {
        'arch.width_scale': 1,
        'alpha_encoder': 0.2,
        'schedule.fixed_n': 10,
        'schedule.fixed_gamma': 0.97,
        'weight_decay': 0.0,
    },
    'fixed_n': {'schedule.fixed_n': 3},
    'fixed_gamma': {'schedule.fixed_gamma': 0.997},
    'no_resets': {'schedule.resets_enabled': False},
    'no_spr': {'arch.use_spr': False, 'spr_weight': 0.0},
    'no_weight_decay': {'weight_decay': 0.0},
    'no_ema': {'ema_tau': 0.0},
    'baseline': {
        'arch.width_scale': 1,
        'arch.use_spr': False,
        'spr_weight': 0.0,
        'schedule.fixed_n': 3,
        'schedule.fixed_gamma': 0.997,
        'schedule.resets_enabled': False,
        'weight_decay': 0.0,
    },
}


def _top_level_fields() -> Dict[str, Any]:
    return {f.name: f for f in fields(AgentConfig) if f.name not in SECTIONS}


def known_keys() -> List[str]:
    """Every canonical dotted key, in declaration order."""
    keys = list(_top_level_fields())
    for section, cls in SECTIONS.items():
        keys.extend(f"{section}.{f.name}" for f in fields(cls))
    return keys


def resolve_key(key: str) -> str:
    """
    Canonical dotted key for `key`.

    Accepts canonical keys, the aliases above and bare section field names
    (`width_scale`, `replay_ratio`) when they are unambiguous.
    """
    key = key.strip().replace('-', '_')
    key = ALIASES.get(key, key)
    if key in known_keys():
        return key
    if '.' not in key:
        matches = [f"{section}.{key}" for section, cls in SECTIONS.items()
                   if key in {f.name for f in fields(cls)}]
        if len(matches) == 1:
            return matches[0]
        if len(matches) > 1:
            raise ConfigError(key, f"ambiguous key, use one of {matches}")
    raise ConfigError(key, "unknown configuration key")


def parse_value(text: str) -> Any:
    """
    Type a value string: numbers, booleans, null via yaml.safe_load; bare
    comma-separated text becomes a list.
    """
    text = text.strip()
    if text == '':
        return None
    try:
        value = yaml.safe_load(text)
    except yaml.YAMLError:
        value = text
    if isinstance(value, str) and ',' in value:
        return [parse_value(part) for part in value.split(',') if part.strip()]
    if isinstance(value, str):
        # yaml 1.1 reads exponents without a dot (1e-4) as strings
        try:
            return float(value) if value.lower() not in ('nan', 'inf', '-inf', 'infinity') else value
        except ValueError:
            return value
    return value


def parse_key_values(lines: Iterable[str], source: str = '<string>') -> List[Tuple[str, Any]]:
    """
    Parse `key = value` lines; `#` starts a comment, blank lines are ignored.

    Returns:
        (raw key, typed value) pairs in file order
    """
    pairs = []
    for number, raw in enumerate(lines, start=1):
        line = raw.split('#', 1)[0].strip()
        if not line:
            continue
        if '=' not in line:
            raise ConfigError(f"{source}:{number}", f"expected 'key = value', got '{raw.strip()}'")
        key, value = line.split('=', 1)
        pairs.append((key.strip(), parse_value(value)))
    return pairs


def read_key_value_file(path: str) -> List[Tuple[str, Any]]:
    if not os.path.exists(path):
        raise ConfigError(path, "configuration file not found")
    with open(path, 'r', encoding='utf-8') as handle:
        return parse_key_values(handle, source=path)


def _coerce(key: str, current: Any, value: Any) -> Any:
    if value is None:
        return None
    if isinstance(current, str):
        return str(value)
    if isinstance(current, bool):
        if isinstance(value, bool):
            return value
        raise ConfigError(key, f"expected true or false, got {value!r}")
    if isinstance(current, tuple):
        items = value if isinstance(value, (list, tuple)) else [value]
        return tuple(int(v) for v in items)
    if isinstance(current, int) and not isinstance(current, bool):
        if isinstance(value, float) and value.is_integer():
            return int(value)
        if not isinstance(value, int):
            raise ConfigError(key, f"expected an integer, got {value!r}")
        return value
    if isinstance(current, float):
        if not isinstance(value, (int, float)) or isinstance(value, bool):
            raise ConfigError(key, f"expected a number, got {value!r}")
        return float(value)
    return value


def apply_overrides(config: AgentConfig, overrides: Iterable[Tuple[str, Any]]) -> AgentConfig:
    """
    New AgentConfig with dotted-key overrides applied and re-validated.

    A `preset` key resets the config to that preset, keeping env and seed.
    """
    top = {k: getattr(config, k) for k in _top_level_fields()}
    sections = {name: asdict(getattr(config, name)) for name in SECTIONS}

    for raw_key, value in overrides:
        if raw_key.strip() == 'preset':
            preset_config = preset(str(value), env=top['env'], seed=top['seed'])
            top = {k: getattr(preset_config, k) for k in _top_level_fields()}
            sections = {name: asdict(getattr(preset_config, name)) for name in SECTIONS}
            continue
        key = resolve_key(raw_key)
        if '.' in key:
            section, name = key.split('.', 1)
            sections[section][name] = _coerce(key, sections[section][name], value)
        else:
            top[key] = _coerce(key, top[key], value)

    try:
        arch = ArchitectureSpec(**sections['arch'])
        schedule = ScheduleConfig(**sections['schedule'])
        return AgentConfig(arch=arch, schedule=schedule, **top)
    except ConfigError:
        raise
    except (TypeError, ValueError) as e:
        raise ConfigError('config', str(e)) from None


def preset(name: str, **overrides: Any) -> AgentConfig:
    """
    Named preset built on the desk-scale BBF defaults.

    Args:
        name: One of PRESETS
        **overrides: Extra dotted keys (use double underscores for dots)

    Returns:
        AgentConfig whose `name` is the preset name unless overridden
    """
    if name not in PRESETS:
        raise ConfigError('preset', f"unknown preset '{name}'. Available: {', '.join(sorted(PRESETS))}")
    pairs = list(PRESETS[name].items())
    pairs.append(('name', overrides.pop('name', name)))
    pairs.extend((key.replace('__', '.'), value) for key, value in overrides.items())
    return apply_overrides(AgentConfig(), pairs)


def load_config(path: Optional[str] = None, overrides: Optional[Iterable[Tuple[str, Any]]] = None) -> AgentConfig:
    """
    Defaults, then the file's entries in order, then `overrides`.

    Args:
        path: Optional key=value file
        overrides: (key, value) pairs from the command line

    Returns:
        Validated AgentConfig
    """
    pairs: List[Tuple[str, Any]] = []
    if path:
        pairs.extend(read_key_value_file(path))
        logger.info(f"Loaded configuration from {path}")
    if overrides:
        pairs.extend(overrides)
    return apply_overrides(AgentConfig(), pairs)


def to_flat_dict(config: AgentConfig) -> Dict[str, Any]:
    """Dotted-key dictionary (JSON/YAML friendly) that load round-trips."""
    flat: Dict[str, Any] = {}
    for key in _top_level_fields():
        flat[key] = getattr(config, key)
    for section in SECTIONS:
        for name, value in asdict(getattr(config, section)).items():
            flat[f"{section}.{name}"] = list(value) if isinstance(value, tuple) else value
    return flat


def from_flat_dict(flat: Dict[str, Any]) -> AgentConfig:
    return apply_overrides(AgentConfig(), list(flat.items()))


def dump_key_values(config: AgentConfig) -> str:
    """Render a config as a key=value file accepted by load_config."""
    lines = []
    for key, value in to_flat_dict(config).items():
        if value is None:
            text = 'null'
        elif isinstance(value, bool):
            text = 'true' if value else 'false'
        elif isinstance(value, list):
            text = ', '.join(str(v) for v in value)
        else:
            text = str(value)
        lines.append(f"{key} = {text}")
    return '\n'.join(lines) + '\n'
