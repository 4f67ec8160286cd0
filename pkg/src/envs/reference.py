"""
Reference Scores Module for DeskBBF

Normalisation anchors for the built-in games, measured rather than
hand-entered: a uniformly random policy over 1,000 fixed episode seeds and
each game's scripted expert over 100 fixed seeds.
"""

import csv
import logging
import os
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable, Dict, Iterable, List, Optional

import numpy as np
from tqdm import tqdm

from src.envs.base import EnvAdapter
from src.envs.registry import make_env

logger = logging.getLogger('deskbbf.envs.reference')

RANDOM_EPISODES = 1000
EXPERT_EPISODES = 100
RANDOM_SEED_OFFSET = 0
EXPERT_SEED_OFFSET = 100_000
POLICY_SEED = 7


@dataclass(frozen=True)
class ReferenceScores:
    game: str
    random: float
    expert: float


def run_episode(env: EnvAdapter, seed: int, policy: Callable[[EnvAdapter], int]) -> float:
    """Play one episode from `seed` and return its undiscounted return."""
    env.reset(seed)
    total = 0.0
    terminal = False
    while not terminal:
        _, reward, terminal = env.step(policy(env))
        total += reward
    return total


def random_policy(num_actions: int, seed: int) -> Callable[[EnvAdapter], int]:
    rng = np.random.default_rng(seed)
    return lambda env: int(rng.integers(num_actions))


def expert_policy(env: EnvAdapter) -> int:
    return env.expert_action()


def policy_returns(name: str, policy_kind: str, episodes: int, seed_offset: int,
                   show_progress: bool = False) -> List[float]:
    """
    Returns of the random or expert policy on episodes seeded
    seed_offset, seed_offset + 1, ...
    """
    env = make_env(name)
    if policy_kind == 'random':
        policy = random_policy(env.spec.num_actions, POLICY_SEED)
    elif policy_kind == 'expert':
        policy = expert_policy
    else:
        raise ValueError(f"Unknown policy kind '{policy_kind}'; expected 'random' or 'expert'")
    seeds = range(seed_offset, seed_offset + episodes)
    iterator = tqdm(seeds, desc=f"{name}/{policy_kind}", leave=False) if show_progress else seeds
    return [run_episode(env, seed, policy) for seed in iterator]


@lru_cache(maxsize=None)
def reference_scores(name: str, random_episodes: int = RANDOM_EPISODES,
                     expert_episodes: int = EXPERT_EPISODES) -> ReferenceScores:
    """Measured (random, expert) mean returns for a built-in game; cached per process."""
    logger.info(f"Measuring reference scores for {name}")
    random_mean = float(np.mean(policy_returns(name, 'random', random_episodes, RANDOM_SEED_OFFSET)))
    expert_mean = float(np.mean(policy_returns(name, 'expert', expert_episodes, EXPERT_SEED_OFFSET)))
    if not expert_mean > random_mean:
        raise ValueError(f"{name}: expert score {expert_mean} does not exceed random score {random_mean}")
    return ReferenceScores(game=name, random=random_mean, expert=expert_mean)


def write_reference_csv(path: str, names: Iterable[str]) -> Optional[str]:
    """
    Write a refs CSV (game, random, human) consumed by the report command.

    The expert anchor fills the `human` column.
    """
    rows = [reference_scores(name) for name in names]
    directory = os.path.dirname(path)
    if directory:
        os.makedirs(directory, exist_ok=True)
    with open(path, 'w', newline='') as handle:
        writer = csv.writer(handle)
        writer.writerow(['game', 'random', 'human'])
        for row in rows:
            writer.writerow([row.game, repr(row.random), repr(row.expert)])
    logger.info(f"Reference scores written to {path}")
    return path


def reference_table(names: Iterable[str]) -> Dict[str, ReferenceScores]:
    return {name: reference_scores(name) for name in names}
