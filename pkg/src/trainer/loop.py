"""
Training Loop Module for DeskBBF

This module runs one BBF training run end to end: data collection at the
configured replay ratio, periodic greedy evaluation, episode-boundary
checkpoints for resuming, and the diagnostic dump written when a numeric
fault aborts the run.
"""

import os
import json
import logging
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Tuple

import numpy as np
from tqdm import tqdm

from src.autodiff.checkpoint import load_arrays, save_arrays
from src.autodiff.tensor import NumericFaultError, set_precision
from src.envs.base import EnvAdapter
from src.envs.registry import make_env
from src.envs.wrappers import FrameStacker
from src.metrics.scores import SCORE_COLUMNS
from src.network.model import select_action
from src.network.resets import NetworkBundle
from src.storage.handler import EPISODES, FAILURE_DUMP, METRICS, SCORES, StorageHandler
from src.trainer.agent import METRIC_COLUMNS, BBFAgent, derive_seed
from src.trainer.config import AgentConfig, from_flat_dict, to_flat_dict

logger = logging.getLogger('deskbbf.trainer')

EPISODE_COLUMNS = ['env_steps', 'episode_index', 'return']

# seed-derivation keys for the environment streams of a run
TRAIN_EPISODE_KEY = 2_000
EVAL_EPISODE_KEY = 3_000
STICKY_KEY = 4_000


@dataclass
class RunRecord:
    """Everything a run logged, in step order."""

    env: str
    config_name: str
    seed: int
    metrics: List[Dict[str, Any]] = field(default_factory=list)
    episodes: List[Dict[str, Any]] = field(default_factory=list)
    scores: List[Dict[str, Any]] = field(default_factory=list)
    resets: List[int] = field(default_factory=list)
    env_steps: int = 0
    completed: bool = False
    resumed: bool = False

    @property
    def gradient_steps(self) -> int:
        return len(self.metrics)

    def final_score(self) -> Optional[float]:
        """Mean return of the last evaluation checkpoint."""
        if not self.scores:
            return None
        last = max(int(row['env_steps']) for row in self.scores)
        return float(np.mean([float(row['return']) for row in self.scores if int(row['env_steps']) == last]))


def evaluate(bundle: NetworkBundle, env: EnvAdapter, episodes: int, seed: int,
             epsilon: float = 0.001, stack_depth: int = 4) -> List[float]:
    """
    Greedy-ish evaluation with the target parameters.

    Args:
        bundle: Networks to evaluate
        env: Environment (a dedicated instance; it is reset every episode)
        episodes: Number of episodes
        seed: Root seed of the episode and action streams
        epsilon: Exploration rate during evaluation
        stack_depth: Frames per observation

    Returns:
        Raw episode returns
    """
    rng = np.random.default_rng([seed, EVAL_EPISODE_KEY])
    stacker = FrameStacker(stack_depth)
    returns = []
    for episode in range(episodes):
        observation = stacker.reset(env.reset(derive_seed(seed, EVAL_EPISODE_KEY, episode)))
        total, terminal = 0.0, False
        while not terminal:
            action = select_action(bundle, observation, epsilon, rng)
            frame, reward, terminal = env.step(action)
            observation = stacker.push(frame)
            total += reward
        returns.append(total)
    return returns


def _score_rows(config: AgentConfig, env_steps: int, returns: List[float]) -> List[Dict[str, Any]]:
    return [{'env': config.env, 'config_name': config.name, 'seed': config.seed, 'env_steps': env_steps,
             'episode_index': i, 'return': value} for i, value in enumerate(returns)]


class Trainer:
    """
    Drives a BBFAgent through one run and keeps its RunRecord and
    on-disk streams consistent.
    """

    def __init__(self, config: AgentConfig, storage: Optional[StorageHandler] = None,
                 show_progress: bool = False):
        """
        Initialize the trainer.

        Args:
            config: Run configuration
            storage: Run-directory storage; None keeps everything in memory
            show_progress: Display a tqdm bar over environment steps
        """
        set_precision(config.precision)
        self.config = config
        self.storage = storage
        self.show_progress = show_progress
        sticky_seed = derive_seed(config.seed, STICKY_KEY)
        self.env = make_env(config.env, config.sticky_prob, sticky_seed)
        self.eval_env = make_env(config.env, config.sticky_prob, sticky_seed)
        self.agent = BBFAgent(config, self.env.spec)
        self.record = RunRecord(env=config.env, config_name=config.name, seed=config.seed)
        self.episode_id = 0
        self.flushed = {METRICS: 0, EPISODES: 0, SCORES: 0}

    @property
    def run_name(self) -> str:
        return self.config.run_name

    def run(self, resume: bool = False) -> RunRecord:
        """
        Train until `total_env_steps` environment steps have been taken.

        Args:
            resume: Continue from the run's checkpoint (or return a completed run untouched)

        Returns:
            RunRecord of the whole run
        """
        config = self.config
        if resume and self._try_resume():
            if self.record.completed:
                logger.info(f"{self.run_name} already complete; nothing to train")
                return self.record
        elif self.storage:
            self._start_fresh()

        logger.info(f"Training {self.run_name} for {config.total_env_steps} env steps "
                    f"(replay ratio {config.schedule.replay_ratio})")
        state = self.agent.schedule_state
        progress = tqdm(total=config.total_env_steps, initial=state.env_steps, desc=self.run_name,
                        disable=not self.show_progress, leave=False)
        try:
            while state.env_steps < config.total_env_steps:
                self._run_episode(progress)
            if not self.record.scores or int(self.record.scores[-1]['env_steps']) != state.env_steps:
                self._evaluate_now()
        except NumericFaultError as e:
            self._dump_fault(e)
            raise
        finally:
            progress.close()

        self.record.env_steps = state.env_steps
        self.record.completed = True
        self._flush()
        self._save_info()
        logger.info(f"Finished {self.run_name}: final score {self.record.final_score()}, "
                    f"{self.record.gradient_steps} gradient steps, {len(self.record.resets)} resets")
        return self.record

    def _run_episode(self, progress) -> None:
        config = self.config
        agent = self.agent
        state = agent.schedule_state
        stacker = FrameStacker(config.stack_depth)

        frame = self.env.reset(derive_seed(config.seed, TRAIN_EPISODE_KEY, self.episode_id))
        observation = stacker.reset(frame)
        episode_return, terminal = 0.0, False
        while not terminal and state.env_steps < config.total_env_steps:
            action = agent.act(observation)
            next_frame, reward, terminal = self.env.step(action)
            due = agent.observe(frame, action, reward, terminal, self.episode_id)
            episode_return += reward
            for _ in range(due):
                row = agent.learn_step()
                self.record.metrics.append(row)
                if row['reset_flag']:
                    self.record.resets.append(row['grad_step'])
            frame = next_frame
            observation = stacker.push(frame)
            progress.update(1)
            if config.eval_every and state.env_steps % config.eval_every == 0:
                self._evaluate_now()

        if terminal:
            self.record.episodes.append({'env_steps': state.env_steps, 'episode_index': self.episode_id,
                                         'return': episode_return})
            self.episode_id += 1
            every = config.checkpoint_every_episodes
            if self.storage and every and self.episode_id % every == 0:
                self.save_checkpoint()

    def _evaluate_now(self) -> None:
        state = self.agent.schedule_state
        returns = evaluate(self.agent.bundle, self.eval_env, self.config.eval_episodes,
                           derive_seed(self.config.seed, state.env_steps),
                           self.config.eval_epsilon, self.config.stack_depth)
        self.record.scores.extend(_score_rows(self.config, state.env_steps, returns))
        if returns:
            logger.info(f"{self.run_name} eval at {state.env_steps} env steps: mean return {np.mean(returns):.3f}")

    def _start_fresh(self) -> None:
        for filename, columns in ((METRICS, METRIC_COLUMNS), (EPISODES, EPISODE_COLUMNS), (SCORES, SCORE_COLUMNS)):
            self.storage.write_rows(self.run_name, filename, [], columns)
        checkpoint = self.storage.checkpoint_path(self.run_name)
        if os.path.exists(checkpoint):
            os.remove(checkpoint)
        self._save_info()

    def _flush(self) -> None:
        """Append rows produced since the last flush to the run's CSV streams."""
        if not self.storage:
            return
        streams = ((METRICS, self.record.metrics, METRIC_COLUMNS),
                   (EPISODES, self.record.episodes, EPISODE_COLUMNS),
                   (SCORES, self.record.scores, SCORE_COLUMNS))
        for filename, rows, columns in streams:
            pending = rows[self.flushed[filename]:]
            if pending:
                self.storage.append_rows(self.run_name, filename, pending, columns)
            self.flushed[filename] = len(rows)

    def _save_info(self) -> None:
        if not self.storage:
            return
        self.storage.save_run_info(self.run_name, {
            'env': self.config.env,
            'config_name': self.config.name,
            'seed': self.config.seed,
            'env_steps': self.agent.schedule_state.env_steps,
            'gradient_steps': self.agent.schedule_state.gradient_steps_total,
            'resets': self.record.resets,
            'completed': self.record.completed,
            'final_score': self.record.final_score(),
            'config': to_flat_dict(self.config),
        })

    def save_checkpoint(self) -> str:
        """Flush the streams, then write the resumable state at an episode boundary."""
        self._flush()
        arrays, meta = self.agent.state_arrays()
        meta.update({
            'config': to_flat_dict(self.config),
            'episode_id': self.episode_id,
            'rows': dict(self.flushed),
            'resets': self.record.resets,
        })
        path = save_arrays(self.storage.checkpoint_path(self.run_name), arrays, meta)
        self._save_info()
        logger.info(f"Checkpoint written at {self.agent.schedule_state.env_steps} env steps: {path}")
        return path

    def _try_resume(self) -> bool:
        if not self.storage:
            return False
        info = self.storage.load_run_info(self.run_name)
        if info and info.get('completed'):
            self._load_rows()
            self.record.completed = True
            self.record.env_steps = int(info.get('env_steps', 0))
            self.record.resets = list(info.get('resets', []))
            return True

        checkpoint = self.storage.checkpoint_path(self.run_name)
        if not os.path.exists(checkpoint):
            logger.info(f"No checkpoint for {self.run_name}; starting from scratch")
            return False

        arrays, meta = load_arrays(checkpoint)
        self.agent.load_state_arrays(arrays, meta)
        self.episode_id = int(meta['episode_id'])
        self.record.resets = list(meta['resets'])
        self._load_rows(limits=meta['rows'])
        self.record.resumed = True
        logger.info(f"Resumed {self.run_name} at {self.agent.schedule_state.env_steps} env steps")
        return True

    def _load_rows(self, limits: Optional[Dict[str, int]] = None) -> None:
        """Read the CSV streams back, cutting rows written after the checkpoint."""
        streams = ((METRICS, METRIC_COLUMNS, 'metrics'), (EPISODES, EPISODE_COLUMNS, 'episodes'),
                   (SCORES, SCORE_COLUMNS, 'scores'))
        for filename, columns, attribute in streams:
            rows = [_typed_row(row) for row in self.storage.read_rows(self.run_name, filename)]
            if limits is not None:
                rows = rows[:int(limits.get(filename, 0))]
                self.storage.write_rows(self.run_name, filename, rows, columns)
            setattr(self.record, attribute, rows)
            self.flushed[filename] = len(rows)

    def _dump_fault(self, error: NumericFaultError) -> Optional[str]:
        state = self.agent.schedule_state
        param_norm = self.agent.bundle.online.norm()
        dump = {
            'error': str(error),
            'op_name': getattr(error, 'op_name', None),
            'env_steps': state.env_steps,
            'gradient_steps': state.gradient_steps_total,
            'last_metrics': self.record.metrics[-5:],
            'param_norm': param_norm if np.isfinite(param_norm) else None,
            'config': to_flat_dict(self.config),
        }
        if not self.storage:
            logger.error(f"Numeric fault in {self.run_name}: {error}")
            return None
        self._flush()
        path = self.storage.path(self.run_name, FAILURE_DUMP)
        with open(path, 'w', encoding='utf-8') as f:
            json.dump(dump, f, indent=2, default=str)
        logger.error(f"Numeric fault in {self.run_name}: {error}. Diagnostics written to {path}")
        return path


def _typed_row(row: Dict[str, str]) -> Dict[str, Any]:
    """Numbers back from CSV text; '3' stays an int and '3.0' a float so rewritten rows are unchanged."""
    typed: Dict[str, Any] = {}
    for key, value in row.items():
        for cast in (int, float):
            try:
                typed[key] = cast(value)
                break
            except (TypeError, ValueError):
                continue
        else:
            typed[key] = value
    return typed


def train(config: AgentConfig, storage: Optional[StorageHandler] = None, resume: bool = False,
          show_progress: bool = False) -> RunRecord:
    """Run one training job; see Trainer.run."""
    return Trainer(config, storage, show_progress).run(resume=resume)


def load_checkpoint(path: str) -> Tuple[AgentConfig, BBFAgent, Dict[str, Any]]:
    """
    Rebuild an agent from a checkpoint file; its configuration is stored in
    the checkpoint metadata.
    """
    arrays, meta = load_arrays(path)
    config = from_flat_dict(meta['config'])
    set_precision(config.precision)
    agent = BBFAgent(config, make_env(config.env).spec)
    agent.load_state_arrays(arrays, meta)
    return config, agent, meta
