"""
Test Module for the DeskBBF replay buffer
"""

import unittest

import numpy as np
from scipy import stats

from src.replay.buffer import ReplayBuffer, Transition, nstep_return
from src.replay.sum_tree import SumTree

FRAME_SHAPE = (1, 2, 2)


def frame(value):
    return np.full(FRAME_SHAPE, value, dtype=np.float32)


def fill(buffer, rewards, terminals=None, episode_id=0, start_value=0.0):
    """Append one transition per reward; frame values encode the step index."""
    terminals = terminals or [False] * len(rewards)
    for step, (reward, terminal) in enumerate(zip(rewards, terminals)):
        buffer.append(Transition(frame(min(start_value + step / 255.0, 1.0)), step % 3, reward, terminal,
                                 episode_id))


class TestNStepReturn(unittest.TestCase):
    """The truncated n-step return oracle."""

    def test_bootstrapped_return(self):
        self.assertAlmostEqual(nstep_return([1, 0, 2], 0.5, 3, 4.0), 2.0)

    def test_terminal_truncates(self):
        self.assertAlmostEqual(nstep_return([1, 5, 5], 0.5, 3, 4.0, terminal_within=0), 1.0)

    def test_terminal_beyond_horizon_is_ignored(self):
        self.assertAlmostEqual(nstep_return([1, 1], 0.5, 2, 2.0, terminal_within=5), 1.0 + 0.5 + 0.25 * 2.0)

    def test_invalid_arguments(self):
        with self.assertRaises(ValueError):
            nstep_return([1.0], 0.9, 0, 0.0)
        with self.assertRaises(ValueError):
            nstep_return([1.0], 0.9, 3, 0.0)

    def test_matches_brute_force_on_random_trajectories(self):
        rng = np.random.default_rng(3)
        for _ in range(10_000):
            n = int(rng.integers(1, 11))
            gamma = float(rng.uniform(0.5, 1.0))
            rewards = rng.normal(size=10)
            bootstrap_q = float(rng.normal() * 10)
            terminal = int(rng.integers(0, 10)) if rng.random() < 0.5 else None
            expected = 0.0
            discount = 1.0
            ended = False
            for k in range(n):
                expected += discount * rewards[k]
                discount *= gamma
                if terminal is not None and k == terminal:
                    ended = True
                    break
            if not ended:
                expected += discount * bootstrap_q
            value = nstep_return(rewards, gamma, n, bootstrap_q, terminal)
            self.assertTrue(np.isclose(value, expected, rtol=1e-12, atol=1e-12), (n, terminal, value, expected))


class TestSumTree(unittest.TestCase):
    """Sum-tree bookkeeping."""

    def test_root_is_leaf_sum(self):
        tree = SumTree(7)
        rng = np.random.default_rng(0)
        for _ in range(200):
            tree.update(int(rng.integers(7)), float(rng.random() * 5))
            self.assertAlmostEqual(tree.total(), float(tree.leaves().sum()), places=12)

    def test_find_respects_intervals(self):
        tree = SumTree(4)
        for index, value in enumerate([1.0, 0.0, 2.0, 1.0]):
            tree.update(index, value)
        self.assertEqual(tree.find(0.5), 0)
        self.assertEqual(tree.find(1.5), 2)
        self.assertEqual(tree.find(3.5), 3)

    def test_rejects_bad_values(self):
        tree = SumTree(2)
        with self.assertRaises(ValueError):
            tree.update(0, -1.0)
        with self.assertRaises(IndexError):
            tree.update(2, 1.0)


class TestStorage(unittest.TestCase):
    """Ring overwrite, quantisation and frame stacking."""

    def test_ring_overwrite(self):
        buffer = ReplayBuffer(5, FRAME_SHAPE)
        fill(buffer, [0.0] * 8)
        self.assertEqual(len(buffer), 5)
        self.assertEqual(buffer.oldest, 3)
        np.testing.assert_array_equal(buffer.is_stored(np.array([2, 3, 7, 8])), [False, True, True, False])

    def test_frames_are_quantised(self):
        buffer = ReplayBuffer(2, FRAME_SHAPE)
        buffer.append(Transition(frame(0.5), 0, 0.0, False, 0))
        self.assertEqual(buffer.frames.dtype, np.uint8)
        self.assertEqual(int(buffer.frames[0, 0, 0, 0]), 128)

    def test_rejects_wrong_frame_shape(self):
        buffer = ReplayBuffer(2, FRAME_SHAPE)
        with self.assertRaises(ValueError):
            buffer.append(Transition(np.zeros((2, 2, 2)), 0, 0.0, False, 0))

    def test_stack_repeats_first_frame_of_episode(self):
        buffer = ReplayBuffer(10, FRAME_SHAPE, stack_depth=4)
        fill(buffer, [0.0] * 3, [False, False, True], episode_id=0, start_value=10 / 255.0)
        fill(buffer, [0.0] * 3, episode_id=1, start_value=20 / 255.0)
        stacked = buffer.stack(np.array([4]))
        self.assertEqual(stacked.shape, (1, 4, 2, 2))
        np.testing.assert_allclose(stacked[0, :, 0, 0] * 255.0, [20, 20, 20, 21], atol=1e-4)


class TestSampling(unittest.TestCase):
    """Anchor validity, return assembly and prioritisation."""

    def test_anchor_validity_near_write_head(self):
        buffer = ReplayBuffer(20, FRAME_SHAPE)
        fill(buffer, [0.0] * 10)
        valid = buffer.valid_anchors(np.arange(10), 3)
        np.testing.assert_array_equal(valid, [True] * 7 + [False] * 3)

    def test_terminal_makes_late_anchors_valid(self):
        buffer = ReplayBuffer(20, FRAME_SHAPE)
        fill(buffer, [0.0] * 10, [False] * 9 + [True])
        self.assertTrue(buffer.valid_anchors(np.arange(10), 3).all())

    def test_returns_match_oracle(self):
        rewards = [1.0, 0.0, 2.0, -1.0, 3.0, 0.5]
        buffer = ReplayBuffer(20, FRAME_SHAPE, prioritized=False)
        fill(buffer, rewards, [False] * 5 + [True])
        batch = buffer.sample(64, 3, 2, np.random.default_rng(0), gamma=0.5)
        for position, value, n_used, alive in zip(batch.indices, batch.returns, batch.n_used, batch.nonterminal):
            remaining = len(rewards) - 1 - position
            terminal_within = remaining if remaining < 3 else None
            expected = nstep_return(rewards[position:], 0.5, 3, 0.0, terminal_within)
            self.assertAlmostEqual(value, expected, places=10)
            self.assertEqual(n_used, min(3, remaining + 1))
            self.assertEqual(alive, remaining >= 3)
        np.testing.assert_allclose(batch.discounts, np.where(batch.nonterminal, 0.5 ** batch.n_used, 0.0))

    def test_spr_mask_stops_at_episode_end(self):
        buffer = ReplayBuffer(20, FRAME_SHAPE, prioritized=False)
        fill(buffer, [0.0] * 3, [False, False, True], episode_id=0)
        fill(buffer, [0.0] * 6, episode_id=1)
        _, _, mask = buffer._spr_sequences(np.array([0, 1, 3]), 3)
        np.testing.assert_array_equal(mask, [[True, True, False], [True, False, False], [True, True, True]])

    def test_empty_buffer(self):
        with self.assertRaises(ValueError):
            ReplayBuffer(4, FRAME_SHAPE).sample(2, 1, 1, np.random.default_rng(0))

    def test_insufficient_data(self):
        buffer = ReplayBuffer(10, FRAME_SHAPE)
        fill(buffer, [0.0, 0.0])
        with self.assertRaisesRegex(ValueError, 'insufficient data'):
            buffer.sample(2, 3, 1, np.random.default_rng(0))

    def test_uniform_sampling(self):
        buffer = ReplayBuffer(10, FRAME_SHAPE, prioritized=False)
        fill(buffer, [0.0] * 10, [True] * 10)
        rng = np.random.default_rng(1)
        draws = np.concatenate([buffer.sample(500, 1, 1, rng).indices for _ in range(20)])
        counts = np.bincount(draws, minlength=10)
        self.assertGreater(stats.chisquare(counts).pvalue, 1e-3)

    def test_priorities_three_to_one(self):
        buffer = ReplayBuffer(2, FRAME_SHAPE, priority_exponent=1.0, priority_epsilon=0.0)
        fill(buffer, [0.0, 0.0], [True, True])
        buffer.update_priorities([0, 1], [3.0, 1.0])
        rng = np.random.default_rng(2)
        draws = np.concatenate([buffer.sample(1_000, 1, 1, rng).indices for _ in range(20)])
        ratio = np.sum(draws == 0) / np.sum(draws == 1)
        self.assertAlmostEqual(ratio, 3.0, delta=0.15)

    def test_importance_weights_normalised_by_max(self):
        buffer = ReplayBuffer(2, FRAME_SHAPE, priority_exponent=1.0, importance_exponent=0.5)
        fill(buffer, [0.0, 0.0], [True, True])
        buffer.update_priorities([0, 1], [3.0, 1.0])
        weights = buffer._importance_weights(np.array([0, 1]))
        self.assertAlmostEqual(weights.max(), 1.0)
        self.assertAlmostEqual(weights[0] / weights[1], (1 / 3) ** 0.5, places=5)

    def test_stale_priority_updates_are_skipped(self):
        buffer = ReplayBuffer(4, FRAME_SHAPE)
        fill(buffer, [0.0] * 6)
        with self.assertLogs('deskbbf.replay', level='WARNING'):
            stale = buffer.update_priorities([0, 1, 5], [1.0, 1.0, 2.0])
        self.assertEqual(stale, 2)
        self.assertAlmostEqual(buffer.sum_tree.get(5 % 4), 2.0 ** 0.5, places=5)

    def test_interleaved_operations_keep_tree_consistent(self):
        buffer = ReplayBuffer(16, FRAME_SHAPE, priority_exponent=0.5)
        rng = np.random.default_rng(4)
        with self.assertLogs('deskbbf.replay', level='WARNING'):
            for step in range(10_000):
                if buffer.total_added == 0 or rng.random() < 0.5:
                    buffer.append(Transition(frame(0.0), 0, 0.0, False, 0))
                else:
                    low = max(0, buffer.total_added - 24)
                    positions = rng.integers(low, buffer.total_added, size=3)
                    before = buffer.sum_tree.leaves().copy()
                    stale_positions = positions[positions < buffer.oldest]
                    stale = buffer.update_priorities(positions, rng.random(3) * 4)
                    self.assertEqual(stale, len(stale_positions))
                    fresh_slots = set(int(p % 16) for p in positions[positions >= buffer.oldest])
                    untouched = [slot for slot in range(16) if slot not in fresh_slots]
                    np.testing.assert_array_equal(buffer.sum_tree.leaves()[untouched], before[untouched])
                leaves = buffer.sum_tree.leaves()
                self.assertAlmostEqual(buffer.sum_tree.total(), float(leaves.sum()),
                                       delta=1e-6 * max(1.0, float(leaves.sum())))


if __name__ == '__main__':
    unittest.main()
