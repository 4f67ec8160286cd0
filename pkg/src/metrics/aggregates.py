"""
Aggregate Metrics Module for DeskBBF

Point statistics over normalised scores: interquartile mean, optimality
gap, median, mean, games above reference and performance profiles, plus
the `aggregate` entry point that assembles an AggregateReport with
bootstrap intervals.
"""

import math
import logging
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from src.metrics.bootstrap import BootstrapInterval, stratified_bootstrap_ci
from src.metrics.scores import ScoreMatrix

logger = logging.getLogger('deskbbf.metrics')

DEFAULT_TRIM = 0.25
TAU_GRID = np.round(np.arange(0.0, 8.0 + 1e-9, 0.05), 10)

Statistic = Callable[[List[np.ndarray]], float]


def _as_scores(scores: Sequence[float]) -> np.ndarray:
    values = np.asarray(scores, dtype=np.float64).reshape(-1)
    if values.size == 0:
        raise ValueError("statistic of an empty score list is undefined")
    return values


def iqm(scores: Sequence[float], trim: float = DEFAULT_TRIM) -> float:
    """
    Interquartile mean with linear fractional trimming.

    Sorted score i covers [i, i + 1) of [0, n]; its weight is the overlap
    with [trim * n, (1 - trim) * n], so the result is continuous in n.

    Args:
        scores: Pooled normalised run scores
        trim: Fraction removed from each end; 0 gives the plain mean
    """
    values = np.sort(_as_scores(scores))
    if not 0.0 <= trim < 0.5:
        raise ValueError(f"trim must lie in [0, 0.5), got {trim}")
    n = values.size
    lower, upper = trim * n, (1.0 - trim) * n
    starts = np.arange(n, dtype=np.float64)
    weights = np.clip(np.minimum(starts + 1.0, upper) - np.maximum(starts, lower), 0.0, 1.0)
    return float(np.dot(weights, values) / weights.sum())


def optimality_gap(scores: Sequence[float], threshold: float = 1.0) -> float:
    """Mean shortfall max(0, threshold - score)."""
    return float(np.mean(np.maximum(0.0, threshold - _as_scores(scores))))


def median(scores: Sequence[float]) -> float:
    return float(np.median(_as_scores(scores)))


def mean(scores: Sequence[float]) -> float:
    return float(np.mean(_as_scores(scores)))


def games_above_reference(game_means: Sequence[float], threshold: float = 1.0) -> int:
    return int(np.sum(_as_scores(game_means) > threshold))


def performance_profile(scores: Sequence[float], taus: Sequence[float] = TAU_GRID) -> List[Tuple[float, float]]:
    """(tau, fraction of scores strictly above tau) for every tau in the grid."""
    values = _as_scores(scores)
    return [(float(tau), float(np.mean(values > tau))) for tau in taus]


def pooled(per_game: List[np.ndarray]) -> np.ndarray:
    return np.concatenate([np.asarray(runs, dtype=np.float64).reshape(-1) for runs in per_game])


def game_means(per_game: List[np.ndarray]) -> np.ndarray:
    return np.array([float(np.mean(runs)) for runs in per_game])


def iqm_statistic(trim: float = DEFAULT_TRIM) -> Statistic:
    return lambda per_game: iqm(pooled(per_game), trim)


def gap_statistic(per_game: List[np.ndarray]) -> float:
    return optimality_gap(pooled(per_game))


def median_statistic(per_game: List[np.ndarray]) -> float:
    return median(game_means(per_game))


def mean_statistic(per_game: List[np.ndarray]) -> float:
    return mean(game_means(per_game))


@dataclass
class Estimate:
    """Point value with its bootstrap interval; unavailable values are NaN."""

    point: float
    lo: float
    hi: float
    available: bool = True

    @classmethod
    def unavailable(cls) -> 'Estimate':
        return cls(math.nan, math.nan, math.nan, available=False)

    @classmethod
    def from_interval(cls, interval: BootstrapInterval) -> 'Estimate':
        return cls(interval.point, interval.lo, interval.hi)


@dataclass
class AggregateReport:
    name: str
    iqm: Estimate
    median: Estimate
    mean: Estimate
    optimality_gap: Estimate
    games_above_reference: int
    profile: List[Tuple[float, float]]
    num_games: int
    num_runs: int
    run_level: bool = True
    degenerate: bool = False
    notes: List[str] = field(default_factory=list)

    def summary(self) -> Dict[str, object]:
        """Flat dictionary row for tables."""
        row: Dict[str, object] = {'name': self.name}
        for metric in ('iqm', 'median', 'mean', 'optimality_gap'):
            estimate: Estimate = getattr(self, metric)
            row[metric] = estimate.point if estimate.available else 'unavailable'
            row[f"{metric}_lo"] = estimate.lo if estimate.available else ''
            row[f"{metric}_hi"] = estimate.hi if estimate.available else ''
        row['games_above_reference'] = self.games_above_reference
        row['num_games'] = self.num_games
        row['num_runs'] = self.num_runs
        row['run_level'] = self.run_level
        row['degenerate_ci'] = self.degenerate
        row['notes'] = '; '.join(self.notes)
        return row


def aggregate(matrix: ScoreMatrix, resamples: int = 2000, level: float = 0.95, seed: int = 0,
              trim: float = DEFAULT_TRIM, taus: Sequence[float] = TAU_GRID) -> AggregateReport:
    """
    Aggregate a score matrix.

    Median, mean and games-above-reference use per-game mean normalised
    scores; IQM, optimality gap and the profile pool individual runs and are
    marked unavailable for matrices without run-level data.

    Args:
        matrix: Scores and anchors
        resamples: Bootstrap resamples per interval
        level: Interval coverage
        seed: Bootstrap seed
        trim: IQM trim fraction
        taus: Profile thresholds

    Returns:
        AggregateReport
    """
    per_game = matrix.normalized_runs()
    means = game_means(per_game)
    notes = []

    def interval(statistic: Statistic) -> Estimate:
        return Estimate.from_interval(
            stratified_bootstrap_ci(per_game, statistic, resamples=resamples, level=level, seed=seed)
        )

    if matrix.run_level:
        iqm_estimate = interval(iqm_statistic(trim))
        gap_estimate = interval(gap_statistic)
        profile = performance_profile(pooled(per_game), taus)
    else:
        iqm_estimate = Estimate.unavailable()
        gap_estimate = Estimate.unavailable()
        profile = []
        notes.append('iqm and optimality_gap need run-level scores')

    degenerate = matrix.is_degenerate()
    if degenerate:
        notes.append('single run per game: intervals collapse to the point estimate')
        logger.warning(f"{matrix.name or 'matrix'}: single run per game, bootstrap intervals are degenerate")

    return AggregateReport(
        name=matrix.name,
        iqm=iqm_estimate,
        median=interval(median_statistic),
        mean=interval(mean_statistic),
        optimality_gap=gap_estimate,
        games_above_reference=games_above_reference(means),
        profile=profile,
        num_games=len(matrix.games),
        num_runs=sum(matrix.run_counts().values()),
        run_level=matrix.run_level,
        degenerate=degenerate,
        notes=notes,
    )
