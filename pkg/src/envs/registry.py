"""
Environment registry: built-in games by name, optional sticky actions and
measured reference anchors.
"""

import logging
from typing import Callable, Dict, List

from src.envs.base import EnvAdapter, EnvSpec
from src.envs.games import Chase, Dodge
from src.envs.wrappers import StickyActionEnv

logger = logging.getLogger('deskbbf.envs')

GAMES: Dict[str, Callable[[], EnvAdapter]] = {
    'chase': Chase,
    'dodge': Dodge,
}


def list_envs() -> List[str]:
    return sorted(GAMES)


def make_env(name: str, sticky_prob: float = 0.0, sticky_seed: int = 0) -> EnvAdapter:
    """
    Build a registered environment.

    Args:
        name: Registered game name (case-insensitive)
        sticky_prob: Repeat probability; 0 returns the bare game
        sticky_seed: Seed of the sticky-action stream

    Returns:
        EnvAdapter instance
    """
    key = name.lower()
    if key not in GAMES:
        raise ValueError(f"Unknown environment '{name}'. Available: {', '.join(list_envs())}")
    env = GAMES[key]()
    if sticky_prob > 0.0:
        env = StickyActionEnv(env, repeat_prob=sticky_prob, seed=sticky_seed)
    return env


def get_spec(name: str, with_references: bool = True) -> EnvSpec:
    """EnvSpec of a registered game, with measured reference scores attached."""
    spec = make_env(name).spec
    if not with_references:
        return spec
    from src.envs.reference import reference_scores

    scores = reference_scores(spec.name)
    return spec.with_references(scores.random, scores.expert)
