"""
Test Module for the DeskBBF trainer

Configuration parsing, the agent's gradient and reset bookkeeping, whole
training runs with checkpoint resume, and the suite runner. Runs use a
network small enough to train a few hundred environment steps in seconds.
"""

import os
import json
import shutil
import tempfile
import unittest
from unittest.mock import patch

import numpy as np

from src.autodiff.tensor import NumericFaultError
from src.envs.registry import make_env
from src.network.resets import parameter_distance
from src.schedules.schedule import ScheduleConfig
from src.storage.handler import EPISODES, FAILURE_DUMP, METRICS, SCORES, StorageHandler
from src.trainer.agent import BBFAgent, derive_seed
from src.trainer.config import (
    AgentConfig, ConfigError, apply_overrides, dump_key_values, from_flat_dict, known_keys, load_config,
    parse_key_values, parse_value, preset, resolve_key, to_flat_dict,
)
from src.trainer.loop import Trainer, evaluate, load_checkpoint, train
from src.trainer.suite import MERGED_SCORES, FAILURES, parse_suite, run_suite, expand_jobs

TINY = [
    ('arch.width_scale', 1),
    ('arch.base_channels', [2, 3, 3]),
    ('arch.hidden_dim', 16),
    ('arch.latent_dim', 8),
    ('arch.num_atoms', 11),
    ('arch.spr_horizon', 2),
    ('schedule.warmup_steps', 40),
    ('schedule.replay_ratio', 0.25),
    ('schedule.anneal_steps', 10),
    ('schedule.reset_period', 10),
    ('schedule.epsilon_decay_steps', 100),
    ('batch_size', 4),
    ('replay_capacity', 1000),
    ('total_env_steps', 200),
    ('eval_every', 100),
    ('eval_episodes', 1),
    ('checkpoint_every_episodes', 1),
]


def tiny_config(env='chase', seed=0, extra=()):
    return load_config(overrides=[('env', env), ('seed', seed)] + TINY + list(extra))


class TestConfig(unittest.TestCase):
    """Key = value parsing, aliases and presets."""

    def setUp(self):
        self.test_dir = tempfile.mkdtemp()

    def tearDown(self):
        shutil.rmtree(self.test_dir)

    def test_parse_value(self):
        self.assertEqual(parse_value('1e-4'), 1e-4)
        self.assertIsInstance(parse_value('1e-4'), float)
        self.assertIs(parse_value('true'), True)
        self.assertEqual(parse_value('16, 32, 32'), [16, 32, 32])
        self.assertEqual(parse_value('chase'), 'chase')
        self.assertIsNone(parse_value(''))

    def test_parse_key_values(self):
        pairs = parse_key_values(['# comment', '', 'lr = 3e-4  # faster', 'env=dodge'])
        self.assertEqual(pairs, [('lr', 3e-4), ('env', 'dodge')])
        with self.assertRaises(ConfigError):
            parse_key_values(['not a pair'])

    def test_resolve_key(self):
        self.assertEqual(resolve_key('rr'), 'schedule.replay_ratio')
        self.assertEqual(resolve_key('width_scale'), 'arch.width_scale')
        self.assertEqual(resolve_key('ema-tau'), 'ema_tau')
        with self.assertRaises(ConfigError) as context:
            resolve_key('learning_rat')
        self.assertEqual(context.exception.key, 'learning_rat')

    def test_defaults(self):
        config = AgentConfig()
        self.assertEqual(config.learning_rate, 1e-4)
        self.assertEqual(config.weight_decay, 0.1)
        self.assertEqual(config.ema_tau, 0.995)
        self.assertEqual(config.batch_size, 32)
        self.assertEqual(config.schedule.warmup_steps, 400)
        self.assertEqual(config.run_name, 'chase__bbf__seed0')

    def test_presets(self):
        canonical = preset('bbf_canonical')
        reference = ScheduleConfig.canonical()
        self.assertEqual(canonical.arch.width_scale, 4)
        self.assertEqual(canonical.schedule.anneal_steps, reference.anneal_steps)
        self.assertEqual(canonical.schedule.reset_period, reference.reset_period)
        self.assertEqual(canonical.schedule.replay_ratio, 8.0)

        sr_spr = preset('sr_spr', seed=3)
        self.assertEqual(sr_spr.alpha_encoder, 0.2)
        self.assertEqual(sr_spr.schedule.fixed_n, 10)
        self.assertEqual(sr_spr.seed, 3)
        self.assertEqual(sr_spr.name, 'sr_spr')

        self.assertEqual(preset('no_ema').ema_tau, 0.0)
        self.assertFalse(preset('baseline').arch.use_spr)
        with self.assertRaises(ConfigError):
            preset('rainbow')

    def test_file_then_overrides(self):
        path = os.path.join(self.test_dir, 'run.cfg')
        with open(path, 'w') as f:
            f.write('preset = no_resets\nenv = dodge\nlr = 2e-4\nwidth_scale = 1\n')
        config = load_config(path, overrides=[('lr', 5e-4), ('seed', 7)])
        self.assertEqual(config.name, 'no_resets')
        self.assertFalse(config.schedule.resets_enabled)
        self.assertEqual(config.env, 'dodge')
        self.assertEqual(config.learning_rate, 5e-4)
        self.assertEqual(config.arch.width_scale, 1)
        self.assertEqual(config.seed, 7)

    def test_preset_keeps_env_and_seed(self):
        config = apply_overrides(AgentConfig(env='dodge', seed=4), [('preset', 'fixed_gamma')])
        self.assertEqual((config.env, config.seed, config.name), ('dodge', 4, 'fixed_gamma'))
        self.assertEqual(config.schedule.fixed_gamma, 0.997)

    def test_invalid_values_name_the_key(self):
        cases = [
            ([('alpha', 1.5)], 'alpha_encoder'),
            ([('schedule.warmup_steps', 5)], 'schedule.warmup_steps'),
            ([('double_q', 3)], 'double_q'),
            ([('batch_size', 'many')], 'batch_size'),
        ]
        for overrides, key in cases:
            with self.assertRaises(ConfigError) as context:
                apply_overrides(AgentConfig(), overrides)
            self.assertEqual(context.exception.key, key)
        with self.assertRaises(ConfigError):
            apply_overrides(AgentConfig(), [('schedule.n_start', 2), ('schedule.n_end', 3)])

    def test_dump_and_reload(self):
        config = tiny_config(extra=[('schedule.fixed_gamma', 0.99)])
        path = os.path.join(self.test_dir, 'dump.cfg')
        with open(path, 'w') as f:
            f.write(dump_key_values(config))
        self.assertEqual(load_config(path), config)
        self.assertEqual(from_flat_dict(to_flat_dict(config)), config)
        self.assertEqual(len(to_flat_dict(config)), len(known_keys()))

    def test_architecture_from_env(self):
        spec = make_env('dodge').spec
        arch = tiny_config().architecture(spec.channels, spec.height, spec.width, spec.num_actions)
        self.assertEqual(arch.input_channels, 16)
        self.assertEqual(arch.num_actions, 3)


class TestAgent(unittest.TestCase):
    """Gradient steps, resets and exact state capture."""

    def setUp(self):
        self.config = tiny_config()
        self.env = make_env('dodge')
        self.agent = BBFAgent(self.config, self.env.spec)

    def fill(self, steps):
        rng = np.random.default_rng(0)
        frame = self.env.reset(0)
        episode = 0
        due = 0
        for _ in range(steps):
            action = int(rng.integers(self.env.spec.num_actions))
            next_frame, reward, terminal = self.env.step(action)
            due = self.agent.observe(frame, action, reward, terminal, episode)
            frame = next_frame
            if terminal:
                episode += 1
                frame = self.env.reset(episode)
        return due

    def test_derive_seed_is_stable(self):
        self.assertEqual(derive_seed(1, 2, 3), derive_seed(1, 2, 3))
        self.assertNotEqual(derive_seed(1, 2, 3), derive_seed(1, 2, 4))

    def test_no_updates_during_warmup(self):
        self.assertEqual(self.fill(39), 0)
        self.assertEqual(self.agent.epsilon(), 1.0)

    def test_first_update_after_warmup(self):
        # replay ratio 0.25: one update every fourth post-warmup step
        self.assertEqual(self.fill(43), 0)
        self.assertEqual(self.agent.schedule_state.env_steps, 43)
        self.assertEqual(self.fill(1), 1)

    def test_learn_step_moves_online_and_target(self):
        self.fill(60)
        online_before = self.agent.bundle.online.copy()
        target_before = self.agent.bundle.target.copy()
        row = self.agent.learn_step()
        self.assertEqual(row['grad_step'], 1)
        self.assertEqual(row['n'], 10)
        self.assertAlmostEqual(row['gamma'], 0.97)
        self.assertTrue(np.isfinite(row['td_loss']))
        self.assertGreater(parameter_distance(online_before, self.agent.bundle.online), 0.0)
        self.assertGreater(parameter_distance(target_before, self.agent.bundle.target), 0.0)

    def test_reset_fires_on_period(self):
        self.fill(60)
        rows = [self.agent.learn_step() for _ in range(10)]
        self.assertEqual([row['reset_flag'] for row in rows], [0] * 9 + [1])
        state = self.agent.schedule_state
        self.assertEqual(state.reset_count, 1)
        self.assertEqual(state.gradient_steps_since_reset, 0)

    def test_reset_keeps_target_and_zeroes_head_moments(self):
        self.fill(60)
        self.agent.learn_step()
        target_before = self.agent.bundle.target.copy()
        counts = self.agent.reset_networks()
        self.assertEqual(parameter_distance(target_before, self.agent.bundle.target), 0.0)
        self.assertGreater(counts['perturb'], 0)
        self.assertGreater(counts['reset'], 0)
        moment = self.agent.optimizer.first_moment['head.value.out.weight']
        self.assertEqual(float(np.abs(moment).sum()), 0.0)

    def test_state_round_trip_reproduces_next_step(self):
        self.fill(60)
        self.agent.learn_step()
        arrays, meta = self.agent.state_arrays()
        arrays = {name: np.array(values, copy=True) for name, values in arrays.items()}
        meta = json.loads(json.dumps(meta))
        expected = self.agent.learn_step()

        clone = BBFAgent(self.config, self.env.spec)
        clone.load_state_arrays(arrays, meta)
        self.assertEqual(clone.learn_step(), expected)

    def test_learn_step_encodes_each_batch_once(self):
        self.fill(60)
        network = self.agent.network
        original = network.encode
        calls = []

        def recording(params, observations):
            calls.append((params is self.agent.bundle.target, len(observations)))
            return original(params, observations)

        with patch.object(network, 'encode', side_effect=recording):
            self.agent.learn_step()
        # online anchors, online bootstrap chooser, target bootstrap plus futures
        self.assertEqual(sorted(calls), [(False, 4), (False, 4), (True, 4 + 4 * 2)])


class TestTrainingRun(unittest.TestCase):
    """Whole runs on the built-in games."""

    def setUp(self):
        self.test_dir = tempfile.mkdtemp()
        self.config = tiny_config()

    def tearDown(self):
        shutil.rmtree(self.test_dir)

    def test_step_and_reset_accounting(self):
        record = train(self.config)
        self.assertTrue(record.completed)
        self.assertEqual(record.env_steps, 200)
        self.assertEqual(record.gradient_steps, 40)
        self.assertEqual(record.resets, [10, 20, 30, 40])
        self.assertEqual(sorted({row['env_steps'] for row in record.scores}), [100, 200])
        self.assertIsNotNone(record.final_score())

    def test_replay_ratio_two(self):
        config = tiny_config(extra=[('rr', 2), ('total_env_steps', 60), ('schedule.reset_period', 1000)])
        record = train(config)
        self.assertEqual(record.gradient_steps, 40)
        self.assertEqual(record.resets, [])

    def test_replay_ratio_eight(self):
        config = tiny_config(extra=[('rr', 8), ('total_env_steps', 50), ('schedule.reset_period', 1000)])
        record = train(config)
        self.assertEqual(record.gradient_steps, (50 - 40) * 8)

    def test_streams_written_to_run_directory(self):
        storage = StorageHandler(self.test_dir)
        record = train(self.config, storage)
        run = self.config.run_name
        self.assertTrue(storage.is_complete(run))
        self.assertEqual(len(storage.read_rows(run, METRICS)), record.gradient_steps)
        self.assertEqual(len(storage.read_rows(run, EPISODES)), len(record.episodes))
        self.assertEqual(len(storage.read_rows(run, SCORES)), len(record.scores))
        self.assertTrue(os.path.exists(storage.checkpoint_path(run)))

    def test_resume_after_interruption_matches_uninterrupted_run(self):
        reference = StorageHandler(os.path.join(self.test_dir, 'reference'))
        train(self.config, reference)

        storage = StorageHandler(os.path.join(self.test_dir, 'interrupted'))
        trainer = Trainer(self.config, storage)
        real_learn_step = trainer.agent.learn_step
        calls = []

        def crash_after_twenty():
            calls.append(1)
            if len(calls) > 20:
                raise RuntimeError('power cut')
            return real_learn_step()

        with patch.object(trainer.agent, 'learn_step', side_effect=crash_after_twenty):
            with self.assertRaises(RuntimeError):
                trainer.run()
        self.assertFalse(storage.is_complete(self.config.run_name))

        record = Trainer(self.config, storage).run(resume=True)
        self.assertTrue(record.resumed)
        run = self.config.run_name
        for stream in (METRICS, EPISODES, SCORES):
            self.assertEqual(storage.read_rows(run, stream), reference.read_rows(run, stream), stream)

    def test_completed_run_is_not_retrained(self):
        storage = StorageHandler(self.test_dir)
        first = train(self.config, storage)
        with patch.object(BBFAgent, 'learn_step') as learn_step:
            second = Trainer(self.config, storage).run(resume=True)
        learn_step.assert_not_called()
        self.assertTrue(second.completed)
        self.assertEqual(second.gradient_steps, first.gradient_steps)
        self.assertEqual(second.final_score(), first.final_score())

    def test_numeric_fault_writes_diagnostics(self):
        storage = StorageHandler(self.test_dir)
        trainer = Trainer(self.config, storage)
        with patch.object(trainer.agent, 'learn_step', side_effect=NumericFaultError('conv2d', '3 of 9 entries')):
            with self.assertRaises(NumericFaultError):
                trainer.run()
        with open(storage.path(self.config.run_name, FAILURE_DUMP), encoding='utf-8') as f:
            dump = json.load(f)
        self.assertEqual(dump['op_name'], 'conv2d')
        self.assertEqual(dump['env_steps'], 44)
        self.assertEqual(dump['config']['env'], 'chase')

    def test_checkpoint_rebuilds_agent(self):
        storage = StorageHandler(self.test_dir)
        train(self.config, storage)
        config, agent, meta = load_checkpoint(storage.checkpoint_path(self.config.run_name))
        self.assertEqual(config, self.config)
        self.assertEqual(agent.schedule_state.to_dict(), meta['schedule_state'])
        returns = evaluate(agent.bundle, make_env(config.env), 2, seed=0)
        self.assertEqual(len(returns), 2)

    def test_evaluation_is_deterministic(self):
        env = make_env(self.config.env)
        agent = BBFAgent(self.config, env.spec)
        first = evaluate(agent.bundle, env, 3, seed=5)
        second = evaluate(agent.bundle, make_env(self.config.env), 3, seed=5)
        self.assertEqual(first, second)

    def test_zero_evaluation_episodes(self):
        env = make_env(self.config.env)
        agent = BBFAgent(self.config, env.spec)
        self.assertEqual(evaluate(agent.bundle, env, 0, seed=5), [])


class TestSuite(unittest.TestCase):
    """The configs x envs x seeds runner."""

    def setUp(self):
        self.test_dir = tempfile.mkdtemp()

    def tearDown(self):
        shutil.rmtree(self.test_dir)

    def suite_pairs(self, **extra):
        pairs = [('envs', ['chase', 'dodge']), ('seeds', [0, 1, 2]), ('configs', 'bbf'), ('write_refs', False)]
        pairs += [(f"override.{key}", value) for key, value in TINY]
        pairs += [('override.total_env_steps', 60), ('override.eval_every', 60)]
        pairs += list(extra.items())
        return pairs

    def test_parse_suite(self):
        spec = parse_suite(self.suite_pairs())
        self.assertEqual(spec.size, 6)
        self.assertEqual(spec.configs, ['bbf'])
        self.assertFalse(spec.write_refs)
        with self.assertRaises(ConfigError):
            parse_suite([('envs', 'chase'), ('seeds', 0), ('configs', 'bbf'), ('gpus', 2)])
        with self.assertRaises(ConfigError):
            parse_suite([('envs', 'chase'), ('configs', 'bbf')])

    def test_expand_jobs(self):
        jobs = expand_jobs(parse_suite(self.suite_pairs()))
        self.assertEqual([(job.env, job.seed) for job in jobs],
                         [('chase', 0), ('chase', 1), ('chase', 2), ('dodge', 0), ('dodge', 1), ('dodge', 2)])
        self.assertTrue(all(job.total_env_steps == 60 for job in jobs))

    def test_run_suite(self):
        result = run_suite(parse_suite(self.suite_pairs()), self.test_dir, show_progress=False)
        self.assertEqual(result['jobs'], 6)
        self.assertEqual(len(result['completed']), 6)
        self.assertEqual(result['failures'], {})
        self.assertIsNone(result['refs'])

        runs_dir = os.path.join(self.test_dir, 'runs')
        score_files = [name for name in os.listdir(runs_dir) if os.path.exists(os.path.join(runs_dir, name, SCORES))]
        self.assertEqual(len(score_files), 6)
        with open(os.path.join(self.test_dir, MERGED_SCORES), encoding='utf-8') as f:
            merged = f.read().splitlines()
        self.assertEqual(len(merged) - 1, 6)

        again = run_suite(parse_suite(self.suite_pairs()), self.test_dir, resume=True, show_progress=False)
        self.assertTrue(all(summary['gradient_steps'] == 5 for summary in again['completed']))

    def test_failed_job_is_recorded(self):
        pairs = self.suite_pairs()
        pairs = [(key, ['chase'] if key == 'envs' else ([0] if key == 'seeds' else value)) for key, value in pairs]
        with patch('src.trainer.suite.train', side_effect=RuntimeError('boom')):
            result = run_suite(parse_suite(pairs), self.test_dir, show_progress=False)
        self.assertEqual(list(result['failures']), ['chase__bbf__seed0'])
        with open(os.path.join(self.test_dir, FAILURES), encoding='utf-8') as f:
            self.assertIn('boom', json.load(f)['chase__bbf__seed0'])


if __name__ == '__main__':
    unittest.main()
