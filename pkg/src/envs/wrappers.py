"""
Environment Wrappers Module for DeskBBF

Sticky actions and frame stacking on top of any EnvAdapter.
"""

from collections import deque
from typing import Deque, Optional, Sequence

import numpy as np

from src.envs.base import EnvAdapter, StepResult


class StickyActionEnv(EnvAdapter):
    """
    With probability `repeat_prob` the previously executed action replaces
    the agent's action. The first step of an episode never repeats.
    """

    def __init__(self, env: EnvAdapter, repeat_prob: float = 0.25, seed: int = 0):
        """
        Initialize the wrapper.

        Args:
            env: Wrapped environment
            repeat_prob: Probability of repeating the previous executed action
            seed: Seed of the wrapper's own stream
        """
        if not 0.0 <= repeat_prob <= 1.0:
            raise ValueError(f"repeat_prob must lie in [0, 1], got {repeat_prob}")
        self.env = env
        self.spec = env.spec
        self.repeat_prob = repeat_prob
        self.seed = seed
        self.rng = np.random.default_rng(seed)
        self.previous_action: Optional[int] = None
        self.executed_action: Optional[int] = None
        self.repeated = False

    @property
    def step_count(self) -> int:
        return self.env.step_count

    def reset(self, seed: int) -> np.ndarray:
        # the repeat stream restarts with every episode seed
        self.rng = np.random.default_rng([self.seed, seed])
        self.previous_action = None
        self.executed_action = None
        self.repeated = False
        return self.env.reset(seed)

    def step(self, action: int) -> StepResult:
        executed = int(action)
        self.repeated = False
        if self.previous_action is not None and self.repeat_prob > 0.0:
            if self.rng.random() < self.repeat_prob:
                executed = self.previous_action
                self.repeated = True
        self.previous_action = executed
        self.executed_action = executed
        return self.env.step(executed)

    def expert_action(self) -> int:
        return self.env.expert_action()


def stack_frames(history: Sequence[np.ndarray], depth: int = 4) -> np.ndarray:
    """
    Concatenate the last `depth` frames along channels, earliest first,
    repeating the oldest available frame when fewer are given.
    """
    if len(history) < 1:
        raise ValueError("stack_frames needs at least one frame")
    if depth < 1:
        raise ValueError(f"depth must be >= 1, got {depth}")
    recent = list(history)[-depth:]
    padding = [recent[0]] * (depth - len(recent))
    return np.concatenate(padding + recent, axis=0)


class FrameStacker:
    """Rolling window of the most recent frames of the current episode."""

    def __init__(self, depth: int = 4):
        if depth < 1:
            raise ValueError(f"depth must be >= 1, got {depth}")
        self.depth = depth
        self.frames: Deque[np.ndarray] = deque(maxlen=depth)

    def reset(self, frame: np.ndarray) -> np.ndarray:
        self.frames.clear()
        self.frames.append(np.asarray(frame))
        return self.observation()

    def push(self, frame: np.ndarray) -> np.ndarray:
        self.frames.append(np.asarray(frame))
        return self.observation()

    def observation(self) -> np.ndarray:
        return stack_frames(self.frames, self.depth)
