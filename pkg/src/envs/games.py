"""
Built-in Games Module for DeskBBF

Two small 10x10 pixel games with four binary planes each:

Chase: steer the agent onto a wandering prey. Every catch is worth +1 and
respawns the prey; episodes last a fixed number of steps.

Dodge: slide along the bottom row while objects fall from the top. Every
object that falls past the bottom is worth +1; being hit ends the episode.
"""

from typing import List, Tuple

import numpy as np

from src.envs.base import EnvSpec, PixelGame

GRID = 10

# (row, col) deltas
CHASE_MOVES = ((0, 0), (-1, 0), (1, 0), (0, -1), (0, 1))
CHASE_ACTION_NAMES = ('noop', 'up', 'down', 'left', 'right')
DODGE_MOVES = (0, -1, 1)
DODGE_ACTION_NAMES = ('noop', 'left', 'right')


def _clip(value: int) -> int:
    return min(max(value, 0), GRID - 1)


class Chase(PixelGame):
    """
    Pursuit game. Planes: agent, prey, agent previous cell, prey previous cell.
    """

    PREY_MOVE_PROB = 0.5

    def __init__(self, max_episode_length: int = 100):
        super().__init__(EnvSpec(name='chase', num_actions=len(CHASE_MOVES),
                                 max_episode_length=max_episode_length))
        self.agent = (0, 0)
        self.prey = (0, 0)
        self.agent_prev = (0, 0)
        self.prey_prev = (0, 0)

    def _random_cell(self) -> Tuple[int, int]:
        return int(self.rng.integers(GRID)), int(self.rng.integers(GRID))

    def _spawn_prey(self) -> Tuple[int, int]:
        while True:
            cell = self._random_cell()
            if cell != self.agent:
                return cell

    def _start(self) -> None:
        self.agent = self._random_cell()
        self.prey = self._spawn_prey()
        self.agent_prev = self.agent
        self.prey_prev = self.prey

    def _advance(self, action: int) -> Tuple[float, bool]:
        self.agent_prev = self.agent
        self.prey_prev = self.prey
        dr, dc = CHASE_MOVES[action]
        self.agent = (_clip(self.agent[0] + dr), _clip(self.agent[1] + dc))

        # prey draws are made every step so the stream does not depend on catches
        wander = self.rng.random() < self.PREY_MOVE_PROB
        direction = int(self.rng.integers(1, len(CHASE_MOVES)))
        if self.agent != self.prey and wander:
            pr, pc = CHASE_MOVES[direction]
            self.prey = (_clip(self.prey[0] + pr), _clip(self.prey[1] + pc))

        if self.agent == self.prey:
            self.prey = self._spawn_prey()
            return 1.0, False
        return 0.0, False

    def _render(self) -> np.ndarray:
        frame = np.zeros(self.spec.observation_shape, dtype=np.float32)
        for plane, (row, col) in enumerate((self.agent, self.prey, self.agent_prev, self.prey_prev)):
            frame[plane, row, col] = 1.0
        return frame

    def expert_action(self) -> int:
        """Close the larger of the row or column gap to the prey."""
        dr = self.prey[0] - self.agent[0]
        dc = self.prey[1] - self.agent[1]
        if dr == 0 and dc == 0:
            return 0
        if abs(dr) >= abs(dc):
            return 2 if dr > 0 else 1
        return 4 if dc > 0 else 3


class Dodge(PixelGame):
    """
    Avoidance game. Planes: agent, falling objects, agent previous cell,
    object previous cells.
    """

    SPAWN_PROB = 0.3

    def __init__(self, max_episode_length: int = 200):
        super().__init__(EnvSpec(name='dodge', num_actions=len(DODGE_MOVES),
                                 max_episode_length=max_episode_length))
        self.agent_col = GRID // 2
        self.agent_prev_col = GRID // 2
        self.objects: List[Tuple[int, int]] = []
        self.objects_prev: List[Tuple[int, int]] = []

    def _start(self) -> None:
        self.agent_col = int(self.rng.integers(GRID))
        self.agent_prev_col = self.agent_col
        self.objects = []
        self._spawn()
        self.objects_prev = list(self.objects)

    def _spawn(self) -> None:
        spawn = self.rng.random() < self.SPAWN_PROB
        column = int(self.rng.integers(GRID))
        if spawn:
            self.objects.append((0, column))

    def _advance(self, action: int) -> Tuple[float, bool]:
        self.agent_prev_col = self.agent_col
        self.objects_prev = list(self.objects)
        self.agent_col = _clip(self.agent_col + DODGE_MOVES[action])

        fallen = [(row + 1, col) for row, col in self.objects]
        if any(row == GRID - 1 and col == self.agent_col for row, col in fallen):
            self.objects = [(row, col) for row, col in fallen if row < GRID]
            return 0.0, True

        self.objects = [(row, col) for row, col in fallen if row < GRID]
        passed = len(fallen) - len(self.objects)
        self._spawn()
        return float(passed), False

    def _render(self) -> np.ndarray:
        frame = np.zeros(self.spec.observation_shape, dtype=np.float32)
        frame[0, GRID - 1, self.agent_col] = 1.0
        for row, col in self.objects:
            frame[1, row, col] = 1.0
        frame[2, GRID - 1, self.agent_prev_col] = 1.0
        for row, col in self.objects_prev:
            frame[3, row, col] = 1.0
        return frame

    def expert_action(self) -> int:
        """Avoid columns with an object about to land, then prefer quiet columns."""
        landing = {col for row, col in self.objects if row == GRID - 2}
        incoming = [col for row, col in self.objects if row == GRID - 3]
        best_action, best_key = 0, None
        for action, delta in enumerate(DODGE_MOVES):
            column = _clip(self.agent_col + delta)
            key = (column in landing, incoming.count(column), action != 0)
            if best_key is None or key < best_key:
                best_action, best_key = action, key
        return best_action
