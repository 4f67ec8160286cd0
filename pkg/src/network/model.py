"""
Network Model Module for DeskBBF

Functional forward passes of the BBF network. The same BBFNetwork object
evaluates any congruent ParameterSet (online, EMA target, template), so
parameters are passed to each call rather than stored.
"""

import logging
from typing import List, Union

import numpy as np

from src.autodiff import ops
from src.autodiff.parameters import ParameterSet
from src.autodiff.tensor import Tensor, ShapeError, no_grad
from src.network.architecture import ArchitectureSpec, BLOCKS_PER_STAGE

logger = logging.getLogger('deskbbf.network.model')

Observation = Union[np.ndarray, Tensor]


class BBFNetwork:
    """
    Impala-style residual encoder with a dueling categorical head and the
    SPR transition, projection and prediction heads.
    """

    def __init__(self, spec: ArchitectureSpec):
        """
        Initialize the network description.

        Args:
            spec: Architecture the parameter sets were drawn for
        """
        self.spec = spec
        self.atoms = spec.atoms()

    def _conv(self, params: ParameterSet, name: str, x: Tensor) -> Tensor:
        return ops.conv2d(x, params[f"{name}.weight"], params[f"{name}.bias"], stride=1, padding=1)

    def _linear(self, params: ParameterSet, name: str, x: Tensor) -> Tensor:
        return ops.linear(x, params[f"{name}.weight"], params[f"{name}.bias"])

    def _check_observations(self, observations: Observation) -> Tensor:
        x = ops.as_tensor(observations)
        expected = (self.spec.input_channels, self.spec.input_height, self.spec.input_width)
        if x.ndim != 4 or tuple(x.shape[1:]) != expected:
            raise ShapeError(f"observation batch shape {x.shape} does not match (N,) + {expected}")
        return x

    def encode(self, params: ParameterSet, observations: Observation) -> Tensor:
        """
        Encode an observation batch into the spatial latent map.

        Each of the three stages is conv -> 3x3/2 max-pool -> two residual
        blocks (relu, conv, relu, conv, identity skip): 15 convolutions.

        Args:
            params: Parameter set to evaluate
            observations: Batch of shape (N, C, H, W) with values in [0, 1]

        Returns:
            Latent tensor of shape (N,) + spec.latent_shape
        """
        x = self._check_observations(observations)
        for stage in range(len(self.spec.base_channels)):
            prefix = f"encoder.stage{stage}"
            x = self._conv(params, f"{prefix}.conv", x)
            x = ops.maxpool2d(x, kernel=3, stride=2, padding=1)
            for block in range(BLOCKS_PER_STAGE):
                branch = ops.relu(x)
                branch = self._conv(params, f"{prefix}.block{block}.conv0", branch)
                branch = ops.relu(branch)
                branch = self._conv(params, f"{prefix}.block{block}.conv1", branch)
                x = ops.add(x, branch)
        return x

    def features(self, latent: Tensor) -> Tensor:
        return ops.flatten(ops.relu(latent))

    def q_logits(self, params: ParameterSet, observations: Observation) -> Tensor:
        """Atom logits of shape (N, num_actions, num_atoms)."""
        return self.head_logits(params, self.encode(params, observations))

    def head_logits(self, params: ParameterSet, latent: Tensor) -> Tensor:
        spec = self.spec
        features = self.features(latent)
        batch = features.shape[0]
        if not spec.dueling:
            hidden = ops.relu(self._linear(params, 'head.q.hidden', features))
            return ops.reshape(self._linear(params, 'head.q.out', hidden),
                               (batch, spec.num_actions, spec.num_atoms))

        value = ops.relu(self._linear(params, 'head.value.hidden', features))
        value = ops.reshape(self._linear(params, 'head.value.out', value), (batch, 1, spec.num_atoms))
        advantage = ops.relu(self._linear(params, 'head.advantage.hidden', features))
        advantage = ops.reshape(self._linear(params, 'head.advantage.out', advantage),
                                (batch, spec.num_actions, spec.num_atoms))
        centred = ops.sub(advantage, ops.reduce_mean(advantage, axis=1, keepdims=True))
        return ops.add(value, centred)

    def q_distribution(self, params: ParameterSet, observations: Observation) -> Tensor:
        """Per-action categorical distributions, rows summing to one."""
        return ops.softmax(self.q_logits(params, observations), axis=-1)

    def q_log_probs(self, params: ParameterSet, observations: Observation) -> Tensor:
        return ops.log_softmax(self.q_logits(params, observations), axis=-1)

    def q_values(self, params: ParameterSet, observations: Observation) -> np.ndarray:
        """Expected returns of shape (N, num_actions), evaluated without the tape."""
        with no_grad():
            probs = self.q_distribution(params, observations).data
        return probs @ self.atoms.astype(probs.dtype)

    def transition(self, params: ParameterSet, latent: Tensor, actions: np.ndarray) -> Tensor:
        """One latent step: z + conv(relu(conv([z, onehot(a)])))."""
        _, height, width = self.spec.latent_shape
        planes = ops.one_hot_planes(actions, self.spec.num_actions, height, width)
        x = ops.concat([latent, planes], axis=1)
        x = ops.relu(self._conv(params, 'transition.conv0', x))
        x = self._conv(params, 'transition.conv1', x)
        return ops.add(latent, x)

    def project(self, params: ParameterSet, latent: Tensor) -> Tensor:
        return self._linear(params, 'projection', self.features(latent))

    def predict(self, params: ParameterSet, projected: Tensor) -> Tensor:
        hidden = ops.relu(self._linear(params, 'prediction.hidden', projected))
        return self._linear(params, 'prediction.out', hidden)

    def spr_rollout(self, params: ParameterSet, latent: Tensor, action_sequence: np.ndarray) -> List[Tensor]:
        """
        Roll the transition model forward K steps from `latent`.

        Args:
            params: Online parameters
            latent: Encoded anchor observations (N,) + latent_shape
            action_sequence: Integer actions of shape (N, K); step k uses column k

        Returns:
            K tensors of shape (N, latent_dim): prediction(projection(z_k)) for k = 1..K
        """
        if not self.spec.use_spr:
            raise ValueError("spr_rollout called on a network built without SPR heads")
        action_sequence = np.asarray(action_sequence, dtype=np.int64)
        if action_sequence.ndim != 2 or action_sequence.shape[1] != self.spec.spr_horizon:
            raise ValueError(
                f"action_sequence shape {action_sequence.shape} does not match "
                f"(N, {self.spec.spr_horizon})"
            )
        predictions = []
        z = latent
        for step in range(self.spec.spr_horizon):
            z = self.transition(params, z, action_sequence[:, step])
            predictions.append(self.predict(params, self.project(params, z)))
        return predictions


def select_action(bundle, observation: np.ndarray, epsilon: float, rng: np.random.Generator) -> int:
    """
    Epsilon-greedy action from the EMA target parameters.

    Ties in expected value resolve to the lowest action index.

    Args:
        bundle: NetworkBundle
        observation: Single stacked observation (C, H, W)
        epsilon: Probability of a uniformly random action
        rng: Generator owned by the caller

    Returns:
        Action index
    """
    if not 0.0 <= epsilon <= 1.0:
        raise ValueError(f"epsilon must lie in [0, 1], got {epsilon}")
    if rng.random() < epsilon:
        return int(rng.integers(bundle.spec.num_actions))
    q = bundle.network.q_values(bundle.target, np.asarray(observation)[None])
    return int(np.argmax(q[0]))
