"""
Stratified bootstrap confidence intervals: runs are resampled with
replacement independently within each game.
"""

import logging
from dataclasses import dataclass
from typing import Callable, List, Sequence

import numpy as np

logger = logging.getLogger('deskbbf.metrics')


@dataclass(frozen=True)
class BootstrapInterval:
    point: float
    lo: float
    hi: float
    degenerate: bool = False


def stratified_bootstrap_ci(per_game: Sequence[np.ndarray], statistic: Callable[[List[np.ndarray]], float],
                            resamples: int = 2000, level: float = 0.95, seed: int = 0) -> BootstrapInterval:
    """
    Percentile interval of `statistic` under per-game resampling.

    Every resample draws from its own generator spawned from `seed`, so the
    result does not depend on evaluation order. The bounds are the raw
    percentiles of the replicates.

    Args:
        per_game: Normalised run scores, one array per game
        statistic: Function of the per-game arrays
        resamples: Number of bootstrap replicates
        level: Coverage in (0, 1)
        seed: Root seed

    Returns:
        BootstrapInterval; degenerate (lo = hi = point) when no game has
        two or more runs
    """
    if not 0.0 < level < 1.0:
        raise ValueError(f"level must lie in (0, 1), got {level}")
    if resamples < 1:
        raise ValueError(f"resamples must be >= 1, got {resamples}")
    per_game = [np.asarray(runs, dtype=np.float64).reshape(-1) for runs in per_game]
    if not per_game or any(runs.size == 0 for runs in per_game):
        raise ValueError("every game needs at least one run")

    point = float(statistic(per_game))
    if all(runs.size < 2 for runs in per_game):
        logger.debug("bootstrap on a single-run matrix; returning the point estimate")
        return BootstrapInterval(point, point, point, degenerate=True)

    children = np.random.SeedSequence(seed).spawn(resamples)
    replicates = np.empty(resamples, dtype=np.float64)
    for i, child in enumerate(children):
        rng = np.random.default_rng(child)
        sample = [runs[rng.integers(0, runs.size, size=runs.size)] for runs in per_game]
        replicates[i] = statistic(sample)

    tail = 100.0 * (1.0 - level) / 2.0
    lo, hi = np.percentile(replicates, [tail, 100.0 - tail])
    return BootstrapInterval(point, float(lo), float(hi))
