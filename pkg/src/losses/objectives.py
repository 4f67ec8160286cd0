"""
Learning Objectives Module for DeskBBF

This module builds the BBF training loss: a categorical multi-step TD loss
against the EMA target network plus the self-predictive latent loss, both
evaluated on augmented replay batches.
"""

import logging
from dataclasses import dataclass, field
from typing import Dict, Optional, Tuple

import numpy as np

from src.autodiff import ops
from src.autodiff.parameters import ParameterSet
from src.autodiff.tensor import Tensor, no_grad
from src.losses.augment import augment
from src.losses.categorical import CategoricalSupport, categorical_projection
from src.network.model import BBFNetwork
from src.replay.buffer import Batch

logger = logging.getLogger('deskbbf.losses')

DEFAULT_SPR_WEIGHT = 2.0


@dataclass
class LossReport:
    """Scalar summaries of one loss evaluation plus the differentiable total."""

    loss: Tensor
    td_loss: float
    spr_loss: float
    total: float
    td_errors: np.ndarray
    diagnostics: Dict[str, float] = field(default_factory=dict)


def cross_entropy(log_probs: Tensor, target_probs: np.ndarray) -> Tensor:
    """Per-row cross-entropy -sum_j p_j log q_j between fixed targets and log-probs."""
    if log_probs.shape != np.shape(target_probs):
        raise ValueError(f"log_probs {log_probs.shape} and targets {np.shape(target_probs)} differ in shape")
    weighted = ops.mul(log_probs, ops.as_tensor(target_probs))
    return ops.scale(ops.reduce_sum(weighted, axis=-1), -1.0)


def _bootstrap_distribution(batch: Batch, network: BBFNetwork, online: ParameterSet, target: ParameterSet,
                            next_observations: np.ndarray, double_q: bool, support: CategoricalSupport,
                            target_latent: Optional[Tensor] = None) -> np.ndarray:
    """Projected target distribution of the bootstrap action, one row per sample."""
    rows = np.arange(batch.size)
    with no_grad():
        if target_latent is None:
            target_latent = network.encode(target, next_observations)
        next_logits = network.head_logits(target, target_latent)
        next_probs = ops.softmax(next_logits, axis=-1).data.astype(np.float64)
        if double_q:
            chooser = network.q_values(online, next_observations)
        else:
            chooser = next_probs @ support.atoms
        next_actions = np.argmax(chooser, axis=1)
        next_dist = next_probs[rows, next_actions]
        shifted = batch.returns[:, None] + batch.discounts[:, None] * support.atoms[None, :]
        return categorical_projection(next_dist, shifted, support)


def td_loss(batch: Batch, network: BBFNetwork, online: ParameterSet, target: ParameterSet,
            double_q: bool = True, observations: Optional[np.ndarray] = None,
            next_observations: Optional[np.ndarray] = None, latent: Optional[Tensor] = None,
            target_latent: Optional[Tensor] = None) -> Tuple[Tensor, np.ndarray, Dict[str, float]]:
    """
    Importance-weighted categorical TD loss.

    The batch already carries truncated n-step returns and the per-sample
    bootstrap discount gamma^n_used (zero after a terminal).

    Args:
        batch: Replay batch
        network: Network evaluating both parameter sets
        online: Parameters being trained
        target: EMA target parameters supplying the bootstrap distribution
        double_q: Pick the bootstrap action with the online parameters
        observations: Replacement (e.g. augmented) anchor observations
        next_observations: Replacement bootstrap observations
        latent: Online encoding of the anchors, when already computed
        target_latent: Target encoding of the bootstrap observations, when already computed

    Returns:
        (loss tensor, per-sample cross-entropy, diagnostics)
    """
    observations = batch.observations if observations is None else observations
    next_observations = batch.next_observations if next_observations is None else next_observations
    support = CategoricalSupport.from_spec(network.spec)
    size = batch.size
    if batch.returns.shape != (size,) or batch.discounts.shape != (size,) or batch.weights.shape != (size,):
        raise ValueError(
            f"batch fields disagree on size: returns {batch.returns.shape}, "
            f"discounts {batch.discounts.shape}, weights {batch.weights.shape}, actions ({size},)"
        )

    projected = _bootstrap_distribution(batch, network, online, target, next_observations,
                                        double_q, support, target_latent)

    if latent is None:
        latent = network.encode(online, observations)
    log_probs = ops.log_softmax(network.head_logits(online, latent), axis=-1)
    chosen = ops.gather(log_probs, batch.actions)
    per_sample = cross_entropy(chosen, projected)
    loss = ops.reduce_mean(ops.mul(per_sample, ops.as_tensor(batch.weights)))

    entropy = -np.sum(projected * np.log(np.clip(projected, 1e-12, None)), axis=1)
    diagnostics = {
        'mean_q': float((np.exp(chosen.data) @ support.atoms).mean()),
        'target_entropy': float(entropy.mean()),
    }
    return loss, per_sample.data.astype(np.float64).copy(), diagnostics


def spr_loss(batch: Batch, network: BBFNetwork, online: ParameterSet, target: ParameterSet,
             observations: Optional[np.ndarray] = None,
             future_observations: Optional[np.ndarray] = None, latent: Optional[Tensor] = None,
             target_projections: Optional[np.ndarray] = None) -> Tensor:
    """
    Self-predictive loss: mean over valid (sample, step) pairs of
    1 - cos(prediction_k, target projection of s_{t+k}).

    Returns a constant zero when no step is valid.

    Args:
        latent: Online encoding of the anchors, when already computed
        target_projections: (N, K, latent_dim) target projections of the futures, when already computed
    """
    spec = network.spec
    horizon = batch.spr_actions.shape[1]
    if horizon != spec.spr_horizon:
        raise ValueError(f"batch SPR horizon {horizon} does not match network horizon {spec.spr_horizon}")
    mask = np.asarray(batch.spr_mask, dtype=bool)
    count = int(mask.sum())
    if count == 0:
        return Tensor(0.0)

    observations = batch.observations if observations is None else observations
    size = batch.size

    if target_projections is None:
        future = batch.spr_observations if future_observations is None else future_observations
        with no_grad():
            flat = future.reshape((size * horizon,) + future.shape[2:])
            target_projections = network.project(target, network.encode(target, flat)).data
    targets = np.asarray(target_projections).reshape(size, horizon, -1)

    if latent is None:
        latent = network.encode(online, observations)
    predictions = network.spr_rollout(online, latent, batch.spr_actions)

    total = None
    ones = ops.as_tensor(np.ones(size))
    for step, prediction in enumerate(predictions):
        if not mask[:, step].any():
            continue
        cosine = ops.cosine_similarity(prediction, ops.as_tensor(targets[:, step]))
        term = ops.reduce_sum(ops.mul(ops.sub(ones, cosine), ops.as_tensor(mask[:, step].astype(np.float64))))
        total = term if total is None else ops.add(total, term)
    return ops.scale(total, 1.0 / count)


def total_loss(batch: Batch, network: BBFNetwork, online: ParameterSet, target: ParameterSet,
               rng: np.random.Generator, spr_weight: float = DEFAULT_SPR_WEIGHT, double_q: bool = True,
               augmentation: bool = True) -> LossReport:
    """
    td_loss + spr_weight * spr_loss.

    One augmented anchor view is encoded once by the online network and
    feeds both the Q head and the SPR rollout. The bootstrap observations
    and the K future observations of every sample go through the target
    network in a single batched pass. Augmentation draws happen in a fixed
    order (anchor, bootstrap, futures) so the TD branch sees the same views
    whether or not the SPR branch is evaluated.

    Args:
        batch: Replay batch
        network: Network evaluating both parameter sets
        online: Trained parameters
        target: EMA target parameters
        rng: Generator for augmentation
        spr_weight: lambda_spr
        double_q: Online-network action selection for the bootstrap
        augmentation: Apply shift and intensity augmentation

    Returns:
        LossReport; call backward on `report.loss`
    """
    def view(images: np.ndarray) -> np.ndarray:
        return augment(images, rng) if augmentation else images

    size = batch.size
    anchors = view(batch.observations)
    next_views = view(batch.next_observations)
    use_spr = network.spec.use_spr and spr_weight > 0.0

    target_inputs = next_views
    if use_spr:
        future = batch.spr_observations
        flat_future = view(future.reshape((-1,) + future.shape[2:]))
        target_inputs = np.concatenate([next_views, flat_future.astype(next_views.dtype, copy=False)])

    latent = network.encode(online, anchors)
    with no_grad():
        target_latent = network.encode(target, target_inputs)
    bootstrap_latent = Tensor(target_latent.data[:size])

    td, td_errors, diagnostics = td_loss(
        batch, network, online, target, double_q=double_q, observations=anchors,
        next_observations=next_views, latent=latent, target_latent=bootstrap_latent,
    )

    loss = td
    spr_value = 0.0
    if use_spr:
        with no_grad():
            projections = network.project(target, Tensor(target_latent.data[size:])).data
        spr = spr_loss(batch, network, online, target, observations=anchors,
                       latent=latent, target_projections=projections)
        spr_value = spr.item()
        loss = ops.add(td, ops.scale(spr, spr_weight))

    return LossReport(
        loss=loss,
        td_loss=td.item(),
        spr_loss=spr_value,
        total=loss.item(),
        td_errors=td_errors,
        diagnostics=diagnostics,
    )
