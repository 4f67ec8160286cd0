"""
Replay Buffer Module for DeskBBF

Ring-buffer storage of single environment frames with episode bookkeeping.
Multi-step returns are assembled at sampling time for whatever horizon the
schedule currently asks for, frames are stacked on the fly, and anchors can
be drawn in proportion to their priorities through a sum-tree.
"""

import logging
from dataclasses import dataclass
from typing import Any, Dict, Optional, Sequence, Tuple

import numpy as np

from src.replay.sum_tree import SumTree

logger = logging.getLogger('deskbbf.replay')

MAX_SAMPLING_ROUNDS = 64


@dataclass
class Transition:
    """
    One environment step. `observation` is the newest single frame seen
    before `action` was taken; stacking happens when batches are assembled.
    """

    observation: np.ndarray
    action: int
    reward: float
    terminal: bool
    episode_id: int


@dataclass
class Batch:
    observations: np.ndarray
    actions: np.ndarray
    n_used: np.ndarray
    returns: np.ndarray
    next_observations: np.ndarray
    nonterminal: np.ndarray
    discounts: np.ndarray
    spr_observations: np.ndarray
    spr_actions: np.ndarray
    spr_mask: np.ndarray
    weights: np.ndarray
    indices: np.ndarray
    gamma: float

    @property
    def size(self) -> int:
        return int(self.actions.shape[0])


def nstep_return(rewards: Sequence[float], gamma: float, n: int, bootstrap_q: float,
                 terminal_within: Optional[int] = None) -> float:
    """
    Truncated n-step return.

    G = sum_{k < n'} gamma^k r_k + [no terminal] * gamma^n' * bootstrap_q,
    where n' = min(n, terminal_within + 1) when the episode ends at step
    `terminal_within` (0-based) and n' = n otherwise.

    Args:
        rewards: Rewards r_0, r_1, ... following the anchor
        gamma: Discount
        n: Requested horizon
        bootstrap_q: Value estimate at the bootstrap state
        terminal_within: Index of the terminal step, if any

    Returns:
        The return
    """
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    terminated = terminal_within is not None and terminal_within < n
    effective = terminal_within + 1 if terminated else n
    if len(rewards) < effective:
        raise ValueError(f"need {effective} rewards, got {len(rewards)}")
    total = 0.0
    discount = 1.0
    for k in range(effective):
        total += discount * rewards[k]
        discount *= gamma
    if not terminated:
        total += discount * bootstrap_q
    return total


class ReplayBuffer:
    """
    Ring buffer of transitions addressed by logical insertion position.

    Position p lives in slot p % capacity and is stored while
    total_added - capacity <= p < total_added.
    """

    def __init__(self, capacity: int, frame_shape: Tuple[int, int, int], stack_depth: int = 4,
                 prioritized: bool = True, priority_exponent: float = 0.5,
                 importance_exponent: float = 0.5, priority_epsilon: float = 1e-6):
        """
        Initialize the buffer.

        Args:
            capacity: Number of transitions kept
            frame_shape: Shape of one stored frame (C, H, W)
            stack_depth: Frames concatenated per observation
            prioritized: Sample in proportion to priority ** priority_exponent
            priority_exponent: omega
            importance_exponent: beta
            priority_epsilon: Offset keeping every priority positive
        """
        if capacity < 1:
            raise ValueError(f"capacity must be >= 1, got {capacity}")
        self.capacity = capacity
        self.frame_shape = tuple(frame_shape)
        self.stack_depth = stack_depth
        self.prioritized = prioritized
        self.priority_exponent = priority_exponent
        self.importance_exponent = importance_exponent
        self.priority_epsilon = priority_epsilon

        self.frames = np.zeros((capacity,) + self.frame_shape, dtype=np.uint8)
        self.actions = np.zeros(capacity, dtype=np.int64)
        self.rewards = np.zeros(capacity, dtype=np.float64)
        self.terminals = np.zeros(capacity, dtype=bool)
        self.episode_ids = np.full(capacity, -1, dtype=np.int64)
        self.sum_tree = SumTree(capacity)
        self.max_priority = 1.0
        self.total_added = 0

    @property
    def size(self) -> int:
        return min(self.total_added, self.capacity)

    @property
    def oldest(self) -> int:
        return max(0, self.total_added - self.capacity)

    def __len__(self) -> int:
        return self.size

    def append(self, transition: Transition) -> None:
        frame = np.asarray(transition.observation)
        if frame.shape != self.frame_shape:
            raise ValueError(f"frame shape {frame.shape} does not match buffer frame shape {self.frame_shape}")
        slot = self.total_added % self.capacity
        self.frames[slot] = np.rint(np.clip(frame, 0.0, 1.0) * 255.0).astype(np.uint8)
        self.actions[slot] = int(transition.action)
        self.rewards[slot] = float(transition.reward)
        self.terminals[slot] = bool(transition.terminal)
        self.episode_ids[slot] = int(transition.episode_id)
        self.sum_tree.update(slot, self.max_priority ** self.priority_exponent)
        self.total_added += 1

    def is_stored(self, positions: np.ndarray) -> np.ndarray:
        positions = np.asarray(positions)
        return (positions >= self.oldest) & (positions < self.total_added)

    def valid_anchors(self, positions: np.ndarray, n: int) -> np.ndarray:
        """
        Whether each position can anchor an n-step target: either the episode
        ends within n steps, or the bootstrap frame at p + n is stored.
        """
        positions = np.asarray(positions, dtype=np.int64)
        offsets = positions[:, None] + np.arange(n)[None, :]
        stored = self.is_stored(offsets)
        terminal = self.terminals[offsets % self.capacity] & stored
        ends_early = terminal.any(axis=1)
        return self.is_stored(positions) & (ends_early | (positions + n < self.total_added))

    def stack(self, positions: np.ndarray) -> np.ndarray:
        """
        Stacked observations (M, depth * C, H, W), earliest frame first.

        Frames before the start of the anchor's episode (or already
        overwritten) are replaced by the oldest available frame of that
        episode.
        """
        positions = np.asarray(positions, dtype=np.int64)
        episode = self.episode_ids[positions % self.capacity]
        chosen = [positions]
        current = positions
        for _ in range(self.stack_depth - 1):
            previous = current - 1
            same = (previous >= self.oldest) & (self.episode_ids[previous % self.capacity] == episode)
            current = np.where(same, previous, current)
            chosen.append(current)
        ordered = chosen[::-1]
        frames = [self.frames[p % self.capacity] for p in ordered]
        return np.concatenate(frames, axis=1).astype(np.float32) / 255.0

    def _draw_candidates(self, count: int, rng: np.random.Generator) -> np.ndarray:
        if self.prioritized:
            total = self.sum_tree.total()
            segment = total / count
            values = (np.arange(count) + rng.random(count)) * segment
            slots = np.array([self.sum_tree.find(min(v, np.nextafter(total, 0))) for v in values],
                             dtype=np.int64)
            return self._slot_to_position(slots)
        return rng.integers(self.oldest, self.total_added, size=count)

    def _slot_to_position(self, slots: np.ndarray) -> np.ndarray:
        newest_slot = (self.total_added - 1) % self.capacity
        base = self.total_added - 1 - newest_slot
        positions = base + slots
        return np.where(positions > self.total_added - 1, positions - self.capacity, positions)

    def sample(self, batch_size: int, n_current: int, spr_horizon: int, rng: np.random.Generator,
               gamma: float = 0.99) -> Batch:
        """
        Assemble a training batch.

        Args:
            batch_size: Number of anchors
            n_current: Update horizon from the schedule
            spr_horizon: K, future steps for the self-prediction targets
            rng: Generator owned by the caller
            gamma: Discount from the schedule, shared by the whole batch

        Returns:
            Batch with truncated n-step returns and SPR subsequences
        """
        if n_current < 1:
            raise ValueError(f"n_current must be >= 1, got {n_current}")
        if self.total_added == 0:
            raise ValueError("cannot sample from an empty replay buffer")

        positions = self._draw_candidates(batch_size, rng)
        valid = self.valid_anchors(positions, n_current)
        rounds = 0
        while not valid.all():
            rounds += 1
            if rounds > MAX_SAMPLING_ROUNDS:
                raise ValueError(
                    f"insufficient data: no valid {n_current}-step anchors among {self.size} transitions"
                )
            redraw = ~valid
            if self.prioritized:
                values = rng.random(int(redraw.sum())) * self.sum_tree.total()
                slots = np.array([self.sum_tree.find(v) for v in values], dtype=np.int64)
                positions[redraw] = self._slot_to_position(slots)
            else:
                positions[redraw] = rng.integers(self.oldest, self.total_added, size=int(redraw.sum()))
            valid = self.valid_anchors(positions, n_current)

        returns, n_used, nonterminal = self._returns(positions, n_current, gamma)
        discounts = np.where(nonterminal, gamma ** n_used, 0.0)

        next_positions = np.where(nonterminal, positions + n_used, positions)
        spr_observations, spr_actions, spr_mask = self._spr_sequences(positions, spr_horizon)

        return Batch(
            observations=self.stack(positions),
            actions=self.actions[positions % self.capacity].copy(),
            n_used=n_used,
            returns=returns,
            next_observations=self.stack(next_positions),
            nonterminal=nonterminal,
            discounts=discounts,
            spr_observations=spr_observations,
            spr_actions=spr_actions,
            spr_mask=spr_mask,
            weights=self._importance_weights(positions),
            indices=positions,
            gamma=float(gamma),
        )

    def _returns(self, positions: np.ndarray, n: int, gamma: float):
        offsets = positions[:, None] + np.arange(n)[None, :]
        stored = self.is_stored(offsets)
        slots = offsets % self.capacity
        terminal = self.terminals[slots] & stored
        # step k contributes while no terminal occurred at an earlier step
        alive = np.ones_like(terminal)
        alive[:, 1:] = np.cumsum(terminal, axis=1)[:, :-1] == 0
        alive &= stored
        rewards = np.where(alive, self.rewards[slots], 0.0)
        discounts = gamma ** np.arange(n, dtype=np.float64)
        returns = (rewards * discounts[None, :]).sum(axis=1)
        ends = terminal.any(axis=1)
        first_terminal = np.argmax(terminal, axis=1)
        n_used = np.where(ends, first_terminal + 1, n).astype(np.int64)
        return returns, n_used, ~ends

    def _spr_sequences(self, positions: np.ndarray, horizon: int):
        batch = positions.shape[0]
        if horizon == 0:
            empty_obs = np.zeros((batch, 0, self.stack_depth * self.frame_shape[0]) + self.frame_shape[1:],
                                 dtype=np.float32)
            return empty_obs, np.zeros((batch, 0), dtype=np.int64), np.zeros((batch, 0), dtype=bool)
        action_positions = positions[:, None] + np.arange(horizon)[None, :]
        target_positions = action_positions + 1
        acted = self.is_stored(action_positions)
        terminal = self.terminals[action_positions % self.capacity] & acted
        ended = np.cumsum(terminal, axis=1) > 0
        mask = acted & self.is_stored(target_positions) & ~ended
        actions = np.where(acted, self.actions[action_positions % self.capacity], 0)
        safe_targets = np.where(mask, target_positions, positions[:, None])
        observations = self.stack(safe_targets.reshape(-1))
        observations = observations.reshape((batch, horizon) + observations.shape[1:])
        return observations, actions.astype(np.int64), mask

    def _importance_weights(self, positions: np.ndarray) -> np.ndarray:
        if not self.prioritized:
            return np.ones(positions.shape[0], dtype=np.float64)
        probabilities = np.array([self.sum_tree.get(int(p % self.capacity)) for p in positions])
        probabilities = probabilities / self.sum_tree.total()
        weights = (self.size * probabilities) ** (-self.importance_exponent)
        return weights / weights.max()

    def update_priorities(self, indices: Sequence[int], td_errors: Sequence[float]) -> int:
        """
        Store priority (|td_error| + epsilon) for previously sampled positions.

        Positions overwritten since they were sampled are skipped.

        Returns:
            Number of skipped (stale) positions
        """
        stale = 0
        for position, error in zip(np.asarray(indices, dtype=np.int64), np.asarray(td_errors, dtype=np.float64)):
            if not (self.oldest <= position < self.total_added):
                stale += 1
                continue
            priority = abs(float(error)) + self.priority_epsilon
            self.max_priority = max(self.max_priority, priority)
            self.sum_tree.update(int(position % self.capacity), priority ** self.priority_exponent)
        if stale:
            logger.warning(f"Skipped {stale} stale priority updates (positions overwritten)")
        return stale

    def state_dict(self) -> Tuple[Dict[str, np.ndarray], Dict[str, Any]]:
        arrays = {
            'replay.frames': self.frames,
            'replay.actions': self.actions,
            'replay.rewards': self.rewards,
            'replay.terminals': self.terminals,
            'replay.episode_ids': self.episode_ids,
            'replay.priorities': self.sum_tree.leaves().copy(),
        }
        meta = {
            'capacity': self.capacity,
            'total_added': self.total_added,
            'max_priority': self.max_priority,
        }
        return arrays, meta

    def load_state_dict(self, arrays: Dict[str, np.ndarray], meta: Dict[str, Any]) -> None:
        if int(meta['capacity']) != self.capacity:
            raise ValueError(f"checkpoint capacity {meta['capacity']} differs from buffer capacity {self.capacity}")
        self.frames[...] = arrays['replay.frames']
        self.actions[...] = arrays['replay.actions']
        self.rewards[...] = arrays['replay.rewards']
        self.terminals[...] = arrays['replay.terminals']
        self.episode_ids[...] = arrays['replay.episode_ids']
        self.sum_tree.load(arrays['replay.priorities'])
        self.total_added = int(meta['total_added'])
        self.max_priority = float(meta['max_priority'])
