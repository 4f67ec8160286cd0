"""
Score Matrix Module for DeskBBF

This module holds raw per-game run scores with their normalisation anchors
and loads them from run-suite score files, reference files and the
published per-game score fixture.
"""

import os
import csv
import glob
import logging
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

import numpy as np

logger = logging.getLogger('deskbbf.metrics')

SCORE_COLUMNS = ['env', 'config_name', 'seed', 'env_steps', 'episode_index', 'return']
FIXTURE_ANCHOR_COLUMNS = ('game', 'random', 'human')


def normalize(score, random_ref: float, expert_ref: float):
    """
    Reference-normalised score (score - random) / (expert - random).

    Args:
        score: Raw score or array of scores
        random_ref: Score mapped to 0
        expert_ref: Score mapped to 1

    Returns:
        Normalised score(s), same type as `score`
    """
    if expert_ref == random_ref:
        raise ValueError(f"reference scores must differ, both are {random_ref}")
    if isinstance(score, (list, tuple, np.ndarray)):
        return (np.asarray(score, dtype=np.float64) - random_ref) / (expert_ref - random_ref)
    return (score - random_ref) / (expert_ref - random_ref)


@dataclass
class ScoreMatrix:
    """
    Raw final returns per game plus each game's random and expert anchors.

    `run_level` is False when every entry is a per-game average rather than
    an individual run (the published fixture), which makes run-pooled
    statistics unavailable.
    """

    games: List[str]
    random_refs: Dict[str, float]
    expert_refs: Dict[str, float]
    runs: Dict[str, List[float]]
    run_level: bool = True
    name: str = ''
    source: Dict[str, str] = field(default_factory=dict)

    def __post_init__(self):
        if not self.games:
            raise ValueError("score matrix needs at least one game")
        for game in self.games:
            if not self.runs.get(game):
                raise ValueError(f"game '{game}' has no runs")
            if game not in self.random_refs or game not in self.expert_refs:
                raise ValueError(f"game '{game}' is missing reference scores")
            if self.random_refs[game] == self.expert_refs[game]:
                raise ValueError(f"game '{game}' has equal random and expert references")

    def normalized_runs(self) -> List[np.ndarray]:
        """Normalised run scores per game, in `games` order."""
        return [normalize(np.asarray(self.runs[g], dtype=np.float64), self.random_refs[g], self.expert_refs[g])
                for g in self.games]

    def run_counts(self) -> Dict[str, int]:
        return {game: len(self.runs[game]) for game in self.games}

    def is_degenerate(self) -> bool:
        return all(len(self.runs[game]) < 2 for game in self.games)


def load_refs(path: str) -> Optional[Dict[str, Tuple[float, float]]]:
    """
    Read a refs CSV with columns game, random, human.

    Returns:
        Mapping game -> (random, expert), or None if the file is missing
    """
    if not os.path.exists(path):
        logger.warning(f"Reference file not found at {path}")
        return None
    refs = {}
    with open(path, newline='', encoding='utf-8') as handle:
        for row in csv.DictReader(handle):
            refs[row['game'].strip().lower()] = (float(row['random']), float(row['human']))
    return refs


def fixture_methods(path: str) -> List[str]:
    """Method columns of a fixture file (everything after game, random, human)."""
    with open(path, newline='', encoding='utf-8') as handle:
        header = next(csv.reader(handle))
    return [column for column in header if column not in FIXTURE_ANCHOR_COLUMNS]


def load_fixture(path: str, method: str) -> ScoreMatrix:
    """
    Build a per-game-mean ScoreMatrix for one method column of a fixture
    CSV laid out as game, random, human, method1, method2, ...
    """
    games, random_refs, expert_refs, runs = [], {}, {}, {}
    with open(path, newline='', encoding='utf-8') as handle:
        reader = csv.DictReader(handle)
        if method not in (reader.fieldnames or []):
            raise ValueError(f"method '{method}' not in fixture columns {reader.fieldnames}")
        for row in reader:
            game = row['game']
            games.append(game)
            random_refs[game] = float(row['random'])
            expert_refs[game] = float(row['human'])
            runs[game] = [float(row[method])]
    return ScoreMatrix(games=games, random_refs=random_refs, expert_refs=expert_refs, runs=runs,
                       run_level=False, name=method, source={'fixture': path})


def read_score_rows(directory: str) -> List[Dict[str, str]]:
    """
    Collect rows of every score CSV under `directory`, dropping duplicates
    (per-run files and a merged matrix may both be present).
    """
    seen = set()
    rows = []
    for path in sorted(glob.glob(os.path.join(directory, '**', '*.csv'), recursive=True)):
        with open(path, newline='', encoding='utf-8') as handle:
            reader = csv.DictReader(handle)
            if reader.fieldnames != SCORE_COLUMNS:
                continue
            for row in reader:
                key = tuple(row[c] for c in SCORE_COLUMNS[:5])
                if key in seen:
                    continue
                seen.add(key)
                rows.append(row)
    return rows


def final_run_scores(rows: List[Dict[str, str]]) -> Dict[Tuple[str, str, int], float]:
    """
    Score of each (config, env, seed) run: mean return of its last
    evaluation checkpoint.
    """
    checkpoints: Dict[Tuple[str, str, int], Dict[int, List[float]]] = {}
    for row in rows:
        key = (row['config_name'], row['env'].lower(), int(row['seed']))
        checkpoints.setdefault(key, {}).setdefault(int(row['env_steps']), []).append(float(row['return']))
    return {key: float(np.mean(by_step[max(by_step)])) for key, by_step in checkpoints.items()}


def load_score_dir(directory: str, refs: Dict[str, Tuple[float, float]]) -> Dict[str, ScoreMatrix]:
    """
    One run-level ScoreMatrix per config name found under `directory`.

    Args:
        directory: Directory searched recursively for score CSVs
        refs: Mapping game -> (random, expert)

    Returns:
        Mapping config name -> ScoreMatrix (empty when no score file exists)
    """
    scores = final_run_scores(read_score_rows(directory))
    if not scores:
        logger.warning(f"No score files found under {directory}")
        return {}

    by_config: Dict[str, Dict[str, List[float]]] = {}
    for (config_name, env, _seed), value in sorted(scores.items()):
        by_config.setdefault(config_name, {}).setdefault(env, []).append(value)

    matrices = {}
    for config_name, runs in by_config.items():
        missing = [game for game in runs if game not in refs]
        if missing:
            raise ValueError(f"no reference scores for {', '.join(missing)}")
        games = sorted(runs)
        matrices[config_name] = ScoreMatrix(
            games=games,
            random_refs={g: refs[g][0] for g in games},
            expert_refs={g: refs[g][1] for g in games},
            runs=runs,
            run_level=True,
            name=config_name,
            source={'scores': directory},
        )
    return matrices


def load_reported(path: str) -> Dict[str, Dict[str, float]]:
    """Published aggregates keyed by method then metric name."""
    reported: Dict[str, Dict[str, float]] = {}
    with open(path, newline='', encoding='utf-8') as handle:
        reader = csv.DictReader(handle)
        for row in reader:
            metric = row['metric']
            for method, value in row.items():
                if method == 'metric' or value in (None, ''):
                    continue
                reported.setdefault(method, {})[metric] = float(value)
    return reported
