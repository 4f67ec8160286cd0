"""
Schedules Module for DeskBBF

All time-varying quantities of a run: the receding n-step horizon, the
increasing discount, the reset clock, epsilon decay and the replay-ratio
ledger. Every function is pure in (state, config).
"""

import math
import logging
from dataclasses import dataclass, asdict
from typing import Dict, List, Optional

logger = logging.getLogger('deskbbf.schedules')


@dataclass
class ScheduleConfig:
    """Constants of every schedule; desk-scale defaults."""

    n_start: int = 10
    n_end: int = 3
    gamma_start: float = 0.97
    gamma_end: float = 0.997
    anneal_steps: int = 1_000
    reset_period: int = 4_000
    resets_enabled: bool = True
    replay_ratio: float = 2.0
    warmup_steps: int = 400
    epsilon_start: float = 1.0
    epsilon_end: float = 0.01
    epsilon_decay_steps: int = 2_000
    fixed_n: Optional[int] = None
    fixed_gamma: Optional[float] = None

    def __post_init__(self):
        if not self.n_start >= self.n_end >= 1:
            raise ValueError(f"need n_start >= n_end >= 1, got {self.n_start}, {self.n_end}")
        if not 0.0 < self.gamma_start < self.gamma_end < 1.0:
            raise ValueError(
                f"need 0 < gamma_start < gamma_end < 1, got {self.gamma_start}, {self.gamma_end}"
            )
        if self.anneal_steps < 1:
            raise ValueError(f"anneal_steps must be >= 1, got {self.anneal_steps}")
        if self.reset_period < 1:
            raise ValueError(f"reset_period must be >= 1, got {self.reset_period}")
        if self.replay_ratio <= 0:
            raise ValueError(f"replay_ratio must be positive, got {self.replay_ratio}")
        if self.warmup_steps < 0:
            raise ValueError(f"warmup_steps must be >= 0, got {self.warmup_steps}")
        if self.fixed_n is not None and self.fixed_n < 1:
            raise ValueError(f"fixed_n must be >= 1, got {self.fixed_n}")
        if self.fixed_gamma is not None and not 0.0 < self.fixed_gamma < 1.0:
            raise ValueError(f"fixed_gamma must lie in (0, 1), got {self.fixed_gamma}")

    @classmethod
    def canonical(cls, **overrides) -> 'ScheduleConfig':
        """Full-scale Atari constants: 40k-step reset period, 10k-step annealing, RR 8."""
        values = dict(anneal_steps=10_000, reset_period=40_000, replay_ratio=8.0, warmup_steps=2_000)
        values.update(overrides)
        return cls(**values)


@dataclass
class ScheduleState:
    """Counters owned by the trainer."""

    gradient_steps_total: int = 0
    gradient_steps_since_reset: int = 0
    env_steps: int = 0
    reset_count: int = 0

    def record_env_step(self) -> None:
        self.env_steps += 1

    def record_gradient_step(self) -> None:
        self.gradient_steps_total += 1
        self.gradient_steps_since_reset += 1

    def record_reset(self) -> None:
        self.reset_count += 1
        self.gradient_steps_since_reset = 0

    def to_dict(self) -> Dict[str, int]:
        return asdict(self)


def anneal_progress(state: ScheduleState, config: ScheduleConfig) -> float:
    """u = min(k, K_a) / K_a for k gradient steps since the last reset."""
    k = state.gradient_steps_since_reset
    return min(k, config.anneal_steps) / config.anneal_steps


def anneal_fraction(config: ScheduleConfig) -> float:
    return config.anneal_steps / config.reset_period


def current_n(state: ScheduleState, config: ScheduleConfig) -> int:
    """
    Update horizon decaying geometrically from n_start to n_end.

    n = round(n_start * (n_end / n_start) ** u), ties to even.
    """
    if config.fixed_n is not None:
        return config.fixed_n
    u = anneal_progress(state, config)
    if u <= 0.0:
        return config.n_start
    if u >= 1.0:
        return config.n_end
    n = round(config.n_start * (config.n_end / config.n_start) ** u)
    return int(min(max(n, config.n_end), config.n_start))


def current_gamma(state: ScheduleState, config: ScheduleConfig) -> float:
    """
    Discount rising from gamma_start to gamma_end, interpolated geometrically
    in the effective horizon H = 1 / (1 - gamma).
    """
    if config.fixed_gamma is not None:
        return config.fixed_gamma
    u = anneal_progress(state, config)
    if u <= 0.0:
        return config.gamma_start
    if u >= 1.0:
        return config.gamma_end
    horizon_start = 1.0 / (1.0 - config.gamma_start)
    horizon_end = 1.0 / (1.0 - config.gamma_end)
    horizon = horizon_start * (horizon_end / horizon_start) ** u
    return 1.0 - 1.0 / horizon


def should_reset(state: ScheduleState, config: ScheduleConfig) -> bool:
    total = state.gradient_steps_total
    return config.resets_enabled and total > 0 and total % config.reset_period == 0


def gradient_steps_due(state: ScheduleState, config: ScheduleConfig) -> int:
    """
    Learning updates owed for the environment step just completed.

    Updates accrue at `replay_ratio` per post-warmup environment step; for
    ratios below one, a single update lands every 1/replay_ratio steps.
    """
    learning_steps = state.env_steps - config.warmup_steps
    if learning_steps <= 0:
        return 0
    ratio = config.replay_ratio
    return int(math.floor(learning_steps * ratio + 1e-9) - math.floor((learning_steps - 1) * ratio + 1e-9))


def current_epsilon(state: ScheduleState, config: ScheduleConfig) -> float:
    """
    Exploration rate: 1 during warmup, then a linear decay that starts at
    the warmup boundary and reaches epsilon_end at env step
    epsilon_decay_steps; continuous at the warmup boundary.
    """
    if state.env_steps < config.warmup_steps:
        return 1.0
    span = config.epsilon_decay_steps - config.warmup_steps
    if span <= 0:
        return config.epsilon_end
    fraction = min((state.env_steps - config.warmup_steps) / span, 1.0)
    return config.epsilon_start + fraction * (config.epsilon_end - config.epsilon_start)


def schedule_table(config: ScheduleConfig, steps: int, stride: int = 1) -> List[Dict[str, float]]:
    """
    Rows of (k, n, gamma) for k = 0, stride, ... <= steps since a reset.
    """
    rows = []
    for k in range(0, steps + 1, max(stride, 1)):
        state = ScheduleState(gradient_steps_since_reset=k)
        rows.append({'k': k, 'n': current_n(state, config), 'gamma': current_gamma(state, config)})
    return rows
