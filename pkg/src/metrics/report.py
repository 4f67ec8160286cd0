"""
Report Module for DeskBBF

Turns score matrices into report and profile tables, and compares
fixture aggregates against the published values.
"""

import os
import logging
from typing import Dict, List, Optional

import numpy as np

from src.formatters.converter import FormatConverter
from src.metrics.aggregates import AggregateReport, aggregate, game_means
from src.metrics.scores import ScoreMatrix, fixture_methods, load_fixture, load_reported

logger = logging.getLogger('deskbbf.metrics.report')

# metrics computable from per-game means, with their comparison tolerance
COMPARABLE_METRICS = {'mean': 0.005, 'median': 0.005, 'games_above_reference': 0}


def build_reports(matrices: Dict[str, ScoreMatrix], resamples: int = 2000, level: float = 0.95,
                  seed: int = 0, trim: float = 0.25) -> List[AggregateReport]:
    return [aggregate(matrix, resamples=resamples, level=level, seed=seed, trim=trim)
            for matrix in matrices.values()]


def fixture_matrices(path: str, methods: Optional[List[str]] = None) -> Dict[str, ScoreMatrix]:
    """Per-game-mean matrices for every (or the listed) method column of a fixture."""
    names = methods or fixture_methods(path)
    return {name: load_fixture(path, name) for name in names}


def report_rows(reports: List[AggregateReport]) -> List[Dict[str, object]]:
    return [report.summary() for report in reports]


def profile_rows(reports: List[AggregateReport]) -> List[Dict[str, object]]:
    rows = []
    for report in reports:
        for tau, fraction in report.profile:
            rows.append({'name': report.name, 'tau': tau, 'fraction': fraction})
    return rows


def compare_with_reported(reports: List[AggregateReport], reported_path: str) -> List[Dict[str, object]]:
    """
    Side-by-side computed and published values for the per-game-mean
    metrics, with a pass flag per cell.
    """
    reported = load_reported(reported_path)
    rows = []
    for report in reports:
        published = reported.get(report.name)
        if published is None:
            logger.warning(f"No published aggregates for {report.name}")
            continue
        computed = {
            'mean': report.mean.point,
            'median': report.median.point,
            'games_above_reference': report.games_above_reference,
        }
        for metric, tolerance in COMPARABLE_METRICS.items():
            if metric not in published:
                continue
            difference = abs(computed[metric] - published[metric])
            rows.append({
                'name': report.name,
                'metric': metric,
                'computed': computed[metric],
                'reported': published[metric],
                'match': difference <= tolerance + 1e-9,
            })
        for metric in ('iqm', 'optimality_gap'):
            if metric in published and not getattr(report, metric).available:
                rows.append({'name': report.name, 'metric': metric, 'computed': None,
                             'reported': published[metric], 'match': None})
    return rows


def write_report(reports: List[AggregateReport], out_path: str, profile_path: Optional[str] = None,
                 formats: Optional[List[str]] = None) -> Dict[str, str]:
    """
    Write the aggregate table (and optionally the profile table).

    Args:
        reports: Aggregates to write
        out_path: CSV path of the aggregate table; other formats share its stem
        profile_path: CSV path of the (name, tau, fraction) profile table
        formats: Extra formats besides csv ('json', 'yaml', 'txt')

    Returns:
        Mapping of output kind to path
    """
    directory, filename = os.path.split(out_path)
    stem = os.path.splitext(filename)[0] or 'report'
    converter = FormatConverter(directory or '.')
    written = {'report': converter.write_csv(report_rows(reports), out_path)}
    extra = [fmt for fmt in (formats or []) if fmt != 'csv']
    if extra:
        metadata = {'reports': len(reports)}
        for fmt, path in converter.convert(report_rows(reports), extra, stem, metadata).items():
            written[f"report.{fmt}"] = path
    if profile_path:
        written['profile'] = converter.write_csv(profile_rows(reports), profile_path,
                                                 columns=['name', 'tau', 'fraction'])
    return written


def acceptance_check(matrices: Dict[str, ScoreMatrix], candidate: str = 'bbf', baseline: str = 'baseline',
                     factor: float = 3.0) -> List[Dict[str, object]]:
    """
    Desk-scale smoke verdict for a suite.

    The candidate passes when its mean raw return is at least `factor`
    times the random policy's mean return over the same games, and its mean
    normalised score is strictly above the baseline arm's.

    Args:
        matrices: Run-level matrices keyed by config name
        candidate: Config name under test
        baseline: Config name of the all-off arm
        factor: Required multiple of the random return

    Returns:
        One row per check with value, threshold and a pass flag
    """
    missing = [name for name in (candidate, baseline) if name not in matrices]
    if missing:
        raise ValueError(f"acceptance check needs scores for {', '.join(missing)}")
    tested, reference = matrices[candidate], matrices[baseline]

    raw = float(np.mean([np.mean(tested.runs[game]) for game in tested.games]))
    random_raw = float(np.mean([tested.random_refs[game] for game in tested.games]))
    tested_norm = float(np.mean(game_means(tested.normalized_runs())))
    baseline_norm = float(np.mean(game_means(reference.normalized_runs())))

    rows = [
        {'name': candidate, 'check': f"return >= {factor:g} x random", 'value': raw,
         'threshold': factor * random_raw, 'passed': raw >= factor * random_raw},
        {'name': candidate, 'check': f"normalised mean > {baseline}", 'value': tested_norm,
         'threshold': baseline_norm, 'passed': tested_norm > baseline_norm},
    ]
    for row in rows:
        verdict = 'passed' if row['passed'] else 'failed'
        log = logger.info if row['passed'] else logger.warning
        log(f"Acceptance {verdict}: {row['name']} {row['check']} ({row['value']:.4f} vs {row['threshold']:.4f})")
    return rows
