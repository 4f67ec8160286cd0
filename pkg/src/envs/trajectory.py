"""
Trajectory dumps for auditing wrappers: one CSV row per step with the
agent's action and the action the environment actually executed.
"""

import csv
import os
from typing import Callable, Dict, List, Optional

import numpy as np

from src.envs.base import EnvAdapter

TRAJECTORY_COLUMNS = ['step', 'action', 'executed_action', 'reward', 'terminal']


def record_trajectory(env: EnvAdapter, seed: int, steps: int,
                      policy: Optional[Callable[[int], int]] = None,
                      policy_seed: int = 0) -> List[Dict[str, object]]:
    """
    Roll `env` for `steps` steps, resetting after each terminal.

    Args:
        env: Environment, possibly wrapped
        seed: Seed of the first episode; later episodes use seed + 1, ...
        steps: Number of rows to record
        policy: Maps the step index to an action; uniform random when omitted
        policy_seed: Seed of the default random policy

    Returns:
        Rows keyed by TRAJECTORY_COLUMNS
    """
    rng = np.random.default_rng(policy_seed)
    if policy is None:
        policy = lambda _: int(rng.integers(env.spec.num_actions))

    rows = []
    episode_seed = seed
    env.reset(episode_seed)
    for step in range(steps):
        action = int(policy(step))
        _, reward, terminal = env.step(action)
        executed = getattr(env, 'executed_action', None)
        rows.append({
            'step': step,
            'action': action,
            'executed_action': action if executed is None else int(executed),
            'reward': reward,
            'terminal': int(terminal),
        })
        if terminal:
            episode_seed += 1
            env.reset(episode_seed)
    return rows


def write_trajectory_csv(rows: List[Dict[str, object]], path: str) -> str:
    directory = os.path.dirname(path)
    if directory:
        os.makedirs(directory, exist_ok=True)
    with open(path, 'w', newline='') as handle:
        writer = csv.DictWriter(handle, fieldnames=TRAJECTORY_COLUMNS)
        writer.writeheader()
        writer.writerows(rows)
    return path
