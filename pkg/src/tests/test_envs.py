"""
Test Module for DeskBBF environments
"""

import csv
import os
import shutil
import tempfile
import unittest
from unittest import mock

import numpy as np

from src.envs.base import EpisodeFinishedError
from src.envs.games import Chase, Dodge
from src.envs.reference import (
    ReferenceScores, policy_returns, reference_scores, write_reference_csv, EXPERT_SEED_OFFSET,
)
from src.envs.registry import list_envs, make_env
from src.envs.trajectory import TRAJECTORY_COLUMNS, record_trajectory, write_trajectory_csv
from src.envs.wrappers import FrameStacker, StickyActionEnv, stack_frames


def rollout(env, seed, actions):
    frames, rewards = [env.reset(seed)], []
    for action in actions:
        frame, reward, terminal = env.step(action)
        frames.append(frame)
        rewards.append(reward)
        if terminal:
            break
    return frames, rewards


class TestGames(unittest.TestCase):
    """Built-in pixel games."""

    def test_observation_planes(self):
        for name in list_envs():
            env = make_env(name)
            frame = env.reset(0)
            self.assertEqual(frame.shape, (4, 10, 10))
            self.assertEqual(frame.dtype, np.float32)
            self.assertTrue(set(np.unique(frame)) <= {0.0, 1.0})

    def test_deterministic_given_seed_and_actions(self):
        actions = list(np.random.default_rng(0).integers(5, size=60))
        a_frames, a_rewards = rollout(Chase(), 11, actions)
        b_frames, b_rewards = rollout(Chase(), 11, actions)
        self.assertEqual(a_rewards, b_rewards)
        for a, b in zip(a_frames, b_frames):
            np.testing.assert_array_equal(a, b)

    def test_chase_truncates(self):
        env = Chase()
        env.reset(0)
        terminals = [env.step(0)[2] for _ in range(100)]
        self.assertEqual(terminals.count(True), 1)
        self.assertTrue(terminals[-1])
        with self.assertRaises(EpisodeFinishedError):
            env.step(0)

    def test_chase_catch(self):
        env = Chase()
        env.reset(0)
        env.agent, env.prey = (0, 0), (0, 1)
        _, reward, terminal = env.step(4)
        self.assertEqual(reward, 1.0)
        self.assertFalse(terminal)
        self.assertNotEqual(env.prey, env.agent)

    def test_dodge_hit_ends_episode(self):
        env = Dodge()
        env.reset(0)
        env.agent_col, env.objects = 5, [(8, 5)]
        _, reward, terminal = env.step(0)
        self.assertEqual(reward, 0.0)
        self.assertTrue(terminal)

    def test_dodge_rewards_passed_objects(self):
        env = Dodge()
        env.reset(0)
        env.agent_col, env.objects = 5, [(9, 3)]
        _, reward, terminal = env.step(0)
        self.assertEqual(reward, 1.0)
        self.assertFalse(terminal)

    def test_dodge_expert_steps_aside(self):
        env = Dodge()
        env.reset(0)
        env.agent_col, env.objects = 5, [(8, 5)]
        self.assertEqual(env.expert_action(), 1)

    def test_step_errors(self):
        env = Dodge()
        with self.assertRaises(EpisodeFinishedError):
            env.step(0)
        env.reset(0)
        with self.assertRaises(ValueError):
            env.step(3)

    def test_unknown_env(self):
        with self.assertRaises(ValueError):
            make_env('pong')


class TestStickyActions(unittest.TestCase):
    """The sticky-action wrapper."""

    def test_repeat_frequency(self):
        env = StickyActionEnv(Chase(), repeat_prob=0.25, seed=3)
        repeats = eligible = 0
        episode = 0
        agent_action = 0
        env.reset(episode)
        while eligible < 100_000:
            first = env.step_count == 0
            agent_action = 1 - agent_action
            _, _, terminal = env.step(agent_action)
            if not first:
                eligible += 1
                repeats += env.repeated
                if env.executed_action != agent_action:
                    self.assertTrue(env.repeated)
            if terminal:
                episode += 1
                env.reset(episode)
        sigma = np.sqrt(0.25 * 0.75 / eligible)
        self.assertAlmostEqual(repeats / eligible, 0.25, delta=min(0.01, 5 * sigma))

    def test_first_step_never_repeats(self):
        env = StickyActionEnv(Chase(), repeat_prob=1.0, seed=0)
        env.reset(0)
        env.step(3)
        self.assertFalse(env.repeated)
        env.step(1)
        self.assertTrue(env.repeated)
        self.assertEqual(env.executed_action, 3)

    def test_zero_probability_matches_bare_game(self):
        actions = list(np.random.default_rng(1).integers(5, size=80))
        bare_frames, bare_rewards = rollout(Chase(), 4, actions)
        sticky_frames, sticky_rewards = rollout(StickyActionEnv(Chase(), repeat_prob=0.0), 4, actions)
        self.assertEqual(bare_rewards, sticky_rewards)
        for a, b in zip(bare_frames, sticky_frames):
            np.testing.assert_array_equal(a, b)
        self.assertIsInstance(make_env('chase', sticky_prob=0.0), Chase)

    def test_repeat_stream_follows_episode_seed(self):
        actions = list(np.random.default_rng(2).integers(5, size=50))
        first = record_trajectory(make_env('chase', 0.25, 9), 5, 50, policy=lambda i: actions[i])
        second = record_trajectory(make_env('chase', 0.25, 9), 5, 50, policy=lambda i: actions[i])
        self.assertEqual(first, second)
        self.assertTrue(any(row['action'] != row['executed_action'] for row in first))

    def test_invalid_probability(self):
        with self.assertRaises(ValueError):
            StickyActionEnv(Chase(), repeat_prob=1.5)


class TestFrameStacking(unittest.TestCase):
    """Observation stacking."""

    def test_short_history_repeats_oldest(self):
        f0, f1 = np.zeros((1, 2, 2)), np.ones((1, 2, 2))
        stacked = stack_frames([f0, f1], depth=4)
        self.assertEqual(stacked.shape, (4, 2, 2))
        np.testing.assert_array_equal(stacked[:, 0, 0], [0, 0, 0, 1])

    def test_stacker_keeps_most_recent(self):
        stacker = FrameStacker(depth=2)
        stacker.reset(np.full((1, 1, 1), 1.0))
        stacker.push(np.full((1, 1, 1), 2.0))
        observation = stacker.push(np.full((1, 1, 1), 3.0))
        np.testing.assert_array_equal(observation.reshape(-1), [2.0, 3.0])
        np.testing.assert_array_equal(stacker.reset(np.zeros((1, 1, 1))).reshape(-1), [0.0, 0.0])

    def test_empty_history(self):
        with self.assertRaises(ValueError):
            stack_frames([])


class TestReferenceScores(unittest.TestCase):
    """Measured normalisation anchors and trajectory dumps."""

    def setUp(self):
        self.test_dir = tempfile.mkdtemp()

    def tearDown(self):
        shutil.rmtree(self.test_dir)

    def test_expert_beats_random(self):
        for name in list_envs():
            scores = reference_scores(name, random_episodes=40, expert_episodes=10)
            self.assertGreater(scores.expert, scores.random)

    def test_expert_reference_is_the_scripted_mean(self):
        scores = reference_scores('chase', random_episodes=40, expert_episodes=100)
        returns = policy_returns('chase', 'expert', 100, EXPERT_SEED_OFFSET)
        self.assertAlmostEqual(float(np.mean(returns)), scores.expert, delta=0.05 * scores.expert)

    def test_unknown_policy_kind(self):
        with self.assertRaises(ValueError):
            policy_returns('chase', 'greedy', 1, 0)

    def test_reference_csv(self):
        path = os.path.join(self.test_dir, 'refs.csv')
        fake = {'chase': ReferenceScores('chase', 1.5, 9.0), 'dodge': ReferenceScores('dodge', 4.0, 40.0)}
        with mock.patch('src.envs.reference.reference_scores', side_effect=lambda name: fake[name]):
            write_reference_csv(path, ['chase', 'dodge'])
        with open(path, newline='') as handle:
            rows = list(csv.DictReader(handle))
        self.assertEqual(rows[0], {'game': 'chase', 'random': '1.5', 'human': '9.0'})
        self.assertEqual(float(rows[1]['human']), 40.0)

    def test_trajectory_csv(self):
        rows = record_trajectory(make_env('dodge'), seed=0, steps=30)
        self.assertEqual(len(rows), 30)
        path = write_trajectory_csv(rows, os.path.join(self.test_dir, 'traj', 'dodge.csv'))
        with open(path, newline='') as handle:
            reader = csv.DictReader(handle)
            self.assertEqual(reader.fieldnames, TRAJECTORY_COLUMNS)
            self.assertEqual(len(list(reader)), 30)


if __name__ == '__main__':
    unittest.main()
