"""
Agent Module for DeskBBF

BBFAgent owns one run's mutable state: the online/target bundle, optimizer
moments, replay buffer, schedule counters and random streams. It exposes
acting, observing, single gradient steps and network resets; the training
loop in loop.py decides when to call them.
"""

import logging
from typing import Any, Dict, Optional, Tuple

import numpy as np

from src.autodiff.optim import AdamWState, adamw_step, clip_grad_norm
from src.autodiff.tensor import backward
from src.envs.base import EnvSpec
from src.losses.objectives import total_loss
from src.network.model import select_action
from src.network.resets import (
    PERTURB, RESET, LayerPolicy, NetworkBundle, create_bundle, draw_template, ema_update, shrink_and_perturb,
)
from src.replay.buffer import ReplayBuffer, Transition
from src.schedules.schedule import (
    ScheduleState, current_epsilon, current_gamma, current_n, gradient_steps_due, should_reset,
)
from src.trainer.config import AgentConfig

logger = logging.getLogger('deskbbf.trainer.agent')

METRIC_COLUMNS = ['grad_step', 'env_steps', 'n', 'gamma', 'td_loss', 'spr_loss',
                  'grad_norm', 'param_norm', 'reset_flag']

# offsets separating the agent's random streams derived from one seed
STREAMS = {'action': 1, 'sample': 2, 'augment': 3, 'eval': 4}


def derive_seed(*keys: int) -> int:
    """Deterministic 32-bit seed from a tuple of non-negative integers."""
    return int(np.random.SeedSequence([int(k) for k in keys]).generate_state(1)[0])


class BBFAgent:
    """
    The learning agent of one run.
    """

    def __init__(self, config: AgentConfig, env_spec: EnvSpec, layer_policy: Optional[LayerPolicy] = None):
        """
        Initialize the agent.

        Args:
            config: Run configuration
            env_spec: Environment description (frame shape and action count)
            layer_policy: Reset policy; perturbs encoder and transition, resets heads by default
        """
        self.config = config
        self.env_spec = env_spec
        self.arch = config.architecture(env_spec.channels, env_spec.height, env_spec.width,
                                        env_spec.num_actions)
        self.bundle: NetworkBundle = create_bundle(self.arch, config.seed)
        self.optimizer = AdamWState(
            self.bundle.online, lr=config.learning_rate, beta1=config.beta1, beta2=config.beta2,
            eps=config.adam_eps, weight_decay=config.weight_decay,
        )
        self.buffer = ReplayBuffer(
            config.replay_capacity, env_spec.observation_shape, stack_depth=config.stack_depth,
            prioritized=config.prioritized, priority_exponent=config.priority_exponent,
            importance_exponent=config.importance_exponent,
        )
        self.schedule_state = ScheduleState()
        self.layer_policy = layer_policy or LayerPolicy()
        self.rngs = {name: np.random.default_rng([config.seed, offset]) for name, offset in STREAMS.items()}

    @property
    def network(self):
        return self.bundle.network

    def epsilon(self) -> float:
        return current_epsilon(self.schedule_state, self.config.schedule)

    def act(self, observation: np.ndarray, epsilon: Optional[float] = None) -> int:
        """Epsilon-greedy action from the target network (scheduled epsilon by default)."""
        eps = self.epsilon() if epsilon is None else epsilon
        return select_action(self.bundle, observation, eps, self.rngs['action'])

    def observe(self, frame: np.ndarray, action: int, reward: float, terminal: bool, episode_id: int) -> int:
        """
        Store one transition and advance the environment-step counter.

        Args:
            frame: Newest single frame seen before `action`
            action: Action the agent chose
            reward: Reward received
            terminal: Whether the episode ended with this step
            episode_id: Index of the current episode

        Returns:
            Number of gradient steps now due
        """
        self.buffer.append(Transition(frame, action, reward, terminal, episode_id))
        self.schedule_state.record_env_step()
        return gradient_steps_due(self.schedule_state, self.config.schedule)

    def learn_step(self) -> Dict[str, Any]:
        """
        One gradient step: sample with the scheduled n, loss with the
        scheduled gamma, AdamW, EMA update, priority update and, when due,
        a reset of the online network.

        Returns:
            Metrics row keyed by METRIC_COLUMNS
        """
        config = self.config
        state = self.schedule_state
        n = current_n(state, config.schedule)
        gamma = current_gamma(state, config.schedule)
        horizon = self.arch.spr_horizon if self.arch.use_spr else 0

        batch = self.buffer.sample(config.batch_size, n, horizon, self.rngs['sample'], gamma=gamma)
        online = self.bundle.online
        online.zero_grad()
        report = total_loss(batch, self.network, online, self.bundle.target, self.rngs['augment'],
                            spr_weight=config.spr_weight, double_q=config.double_q,
                            augmentation=config.augmentation)
        backward(report.loss)
        grad_norm = clip_grad_norm(online, config.max_grad_norm)
        adamw_step(online, self.optimizer)
        ema_update(self.bundle, config.ema_tau)
        self.buffer.update_priorities(batch.indices, report.td_errors)
        state.record_gradient_step()

        row = {
            'grad_step': state.gradient_steps_total,
            'env_steps': state.env_steps,
            'n': n,
            'gamma': gamma,
            'td_loss': report.td_loss,
            'spr_loss': report.spr_loss,
            'grad_norm': grad_norm,
            'param_norm': online.norm(),
            'reset_flag': 0,
        }
        if should_reset(state, config.schedule):
            self.reset_networks()
            row['reset_flag'] = 1
        return row

    def reset_networks(self) -> Dict[str, int]:
        """
        Shrink-and-perturb the online network towards a fresh template.

        Moments of fully reset entries are zeroed and those of perturbed
        entries scaled by (1 - alpha_encoder). The EMA target is left alone.

        Returns:
            Number of entries per reset action
        """
        alpha = self.config.alpha_encoder
        state = self.schedule_state
        template_seed = derive_seed(self.config.seed, 1_000, state.reset_count)
        template = draw_template(self.arch, template_seed)
        groups = self.layer_policy.partition(self.bundle.online)

        self.bundle.online.assign(shrink_and_perturb(self.bundle.online, template, alpha, self.layer_policy))
        self.optimizer.reset_moments(groups[RESET])
        self.optimizer.rescale_moments(groups[PERTURB], 1.0 - alpha)
        state.record_reset()

        logger.info(
            f"Reset {state.reset_count} at gradient step {state.gradient_steps_total}: "
            f"{len(groups[PERTURB])} perturbed, {len(groups[RESET])} reset"
        )
        return {action: len(names) for action, names in groups.items()}

    def state_arrays(self) -> Tuple[Dict[str, np.ndarray], Dict[str, Any]]:
        """Arrays and JSON metadata capturing the agent completely."""
        arrays: Dict[str, np.ndarray] = {}
        for name, values in self.bundle.online.to_arrays().items():
            arrays[f"online.{name}"] = values
        for name, values in self.bundle.target.to_arrays().items():
            arrays[f"target.{name}"] = values
        for name, values in self.optimizer.to_arrays().items():
            arrays[f"adam.{name}"] = values
        replay_arrays, replay_meta = self.buffer.state_dict()
        arrays.update(replay_arrays)
        meta = {
            'schedule_state': self.schedule_state.to_dict(),
            'optimizer_steps': self.optimizer.step_count,
            'replay': replay_meta,
            'rngs': {name: rng.bit_generator.state for name, rng in self.rngs.items()},
        }
        return arrays, meta

    def load_state_arrays(self, arrays: Dict[str, np.ndarray], meta: Dict[str, Any]) -> None:
        for name, tensor in self.bundle.online.items():
            tensor.data[...] = arrays[f"online.{name}"]
        for name, tensor in self.bundle.target.items():
            tensor.data[...] = arrays[f"target.{name}"]
        self.optimizer.load_arrays({k[len('adam.'):]: v for k, v in arrays.items() if k.startswith('adam.')},
                                   meta['optimizer_steps'])
        self.buffer.load_state_dict(arrays, meta['replay'])
        self.schedule_state = ScheduleState(**meta['schedule_state'])
        for name, state in meta['rngs'].items():
            self.rngs[name].bit_generator.state = state
