"""
Environment Interface Module for DeskBBF

This module defines the environment contract shared by the built-in pixel
games and any externally streamed environment.
"""

import logging
from abc import ABC, abstractmethod
from dataclasses import dataclass, replace
from typing import Optional, Tuple

import numpy as np

logger = logging.getLogger('deskbbf.envs')

StepResult = Tuple[np.ndarray, float, bool]


class EpisodeFinishedError(RuntimeError):
    """Raised when stepping an environment whose episode already ended."""


@dataclass(frozen=True)
class EnvSpec:
    """Static description of an environment and its normalisation anchors."""

    name: str
    num_actions: int
    max_episode_length: int
    channels: int = 4
    height: int = 10
    width: int = 10
    reference_random_score: Optional[float] = None
    reference_expert_score: Optional[float] = None

    def __post_init__(self):
        if self.num_actions < 1:
            raise ValueError(f"{self.name}: num_actions must be >= 1, got {self.num_actions}")
        if self.max_episode_length < 1:
            raise ValueError(f"{self.name}: max_episode_length must be >= 1, got {self.max_episode_length}")
        if self.has_references and not self.reference_expert_score > self.reference_random_score:
            raise ValueError(
                f"{self.name}: expert reference {self.reference_expert_score} must exceed "
                f"random reference {self.reference_random_score}"
            )

    @property
    def observation_shape(self) -> Tuple[int, int, int]:
        return (self.channels, self.height, self.width)

    @property
    def has_references(self) -> bool:
        return self.reference_random_score is not None and self.reference_expert_score is not None

    def with_references(self, random_score: float, expert_score: float) -> 'EnvSpec':
        return replace(self, reference_random_score=float(random_score),
                       reference_expert_score=float(expert_score))


class EnvAdapter(ABC):
    """
    Minimal episodic environment: reset(seed) then step(action) until terminal.

    Implementations must be deterministic given the seed and action sequence.
    """

    spec: EnvSpec

    @abstractmethod
    def reset(self, seed: int) -> np.ndarray:
        """Start a new episode and return the first observation."""

    @abstractmethod
    def step(self, action: int) -> StepResult:
        """Advance one step and return (observation, reward, terminal)."""

    @property
    @abstractmethod
    def step_count(self) -> int:
        """Steps taken in the current episode."""


class PixelGame(EnvAdapter):
    """
    Base class for the built-in binary-plane grid games.

    Subclasses implement `_start`, `_advance` and `_render`; this class owns
    the episode rng, step counter, truncation and argument checks.
    """

    def __init__(self, spec: EnvSpec):
        """
        Initialize the game.

        Args:
            spec: Static description; observation planes must match `_render`
        """
        self.spec = spec
        self.rng: Optional[np.random.Generator] = None
        self._steps = 0
        self._done = True

    @property
    def step_count(self) -> int:
        return self._steps

    @property
    def done(self) -> bool:
        return self._done

    def reset(self, seed: int) -> np.ndarray:
        self.rng = np.random.default_rng(seed)
        self._steps = 0
        self._done = False
        self._start()
        return self._observe()

    def step(self, action: int) -> StepResult:
        if self.rng is None:
            raise EpisodeFinishedError(f"{self.spec.name}: step called before reset")
        if self._done:
            raise EpisodeFinishedError(f"{self.spec.name}: step called after the episode ended")
        action = int(action)
        if not 0 <= action < self.spec.num_actions:
            raise ValueError(f"{self.spec.name}: action {action} outside [0, {self.spec.num_actions})")

        reward, terminal = self._advance(action)
        self._steps += 1
        if self._steps >= self.spec.max_episode_length:
            terminal = True
        self._done = terminal
        return self._observe(), float(reward), bool(terminal)

    def _observe(self) -> np.ndarray:
        frame = self._render()
        if frame.shape != self.spec.observation_shape:
            raise ValueError(f"{self.spec.name}: rendered {frame.shape}, expected {self.spec.observation_shape}")
        return frame

    def expert_action(self) -> int:
        """Scripted policy used to derive the expert reference score."""
        raise NotImplementedError(f"{self.spec.name} ships no scripted expert")

    @abstractmethod
    def _start(self) -> None:
        """Draw the initial state from self.rng."""

    @abstractmethod
    def _advance(self, action: int) -> Tuple[float, bool]:
        """Apply one action; return (reward, terminal)."""

    @abstractmethod
    def _render(self) -> np.ndarray:
        """Current binary planes (channels, height, width) as float32."""
