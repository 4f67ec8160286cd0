"""
Parameter-Space Operations Module for DeskBBF

Online/target bundles, shrink-and-perturb and hard resets, and the EMA
target update.
"""

import logging
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from src.autodiff.parameters import ParameterSet
from src.network.architecture import ArchitectureSpec, init_parameters
from src.network.model import BBFNetwork

logger = logging.getLogger('deskbbf.network.resets')

PERTURB = 'perturb'
RESET = 'reset'
KEEP = 'keep'


class LayerPolicy:
    """
    Maps parameter names to how a reset treats them.

    Rules are (prefix, action) pairs checked in order; the first matching
    prefix wins. An empty prefix matches everything.
    """

    DEFAULT_RULES = (
        ('encoder.', PERTURB),
        ('transition.', PERTURB),
        ('', RESET),
    )

    def __init__(self, rules: Optional[Sequence[Tuple[str, str]]] = None):
        self.rules = list(rules if rules is not None else self.DEFAULT_RULES)
        for prefix, action in self.rules:
            if action not in (PERTURB, RESET, KEEP):
                raise ValueError(f"Unknown reset action '{action}' for prefix '{prefix}'")

    def classify(self, name: str) -> str:
        for prefix, action in self.rules:
            if name.startswith(prefix):
                return action
        return KEEP

    def partition(self, params: ParameterSet) -> Dict[str, List[str]]:
        groups: Dict[str, List[str]] = {PERTURB: [], RESET: [], KEEP: []}
        for name in params:
            groups[self.classify(name)].append(name)
        return groups


@dataclass
class NetworkBundle:
    """Online parameters, their EMA target copy and the architecture they share."""

    online: ParameterSet
    target: ParameterSet
    spec: ArchitectureSpec

    def __post_init__(self):
        self.online.check_congruent(self.target)
        self.network = BBFNetwork(self.spec)


def create_bundle(spec: ArchitectureSpec, seed: int) -> NetworkBundle:
    """Fresh online parameters and an identical, non-trainable target copy."""
    online = init_parameters(spec, seed, trainable=True)
    target = online.copy(trainable=False)
    return NetworkBundle(online=online, target=target, spec=spec)


def shrink_and_perturb(params: ParameterSet, random_template: ParameterSet, alpha_encoder: float,
                       layer_policy: Optional[LayerPolicy] = None) -> ParameterSet:
    """
    Move perturbed layers `alpha_encoder` of the way towards a random template
    and replace reset layers by the template outright.

    theta' = (1 - alpha) * theta + alpha * theta_rand   for perturbed entries
    theta' = theta_rand                                  for reset entries

    Args:
        params: Current parameters
        random_template: Freshly drawn congruent parameters
        alpha_encoder: Interpolation fraction in [0, 1]
        layer_policy: Which entries are perturbed, reset or kept

    Returns:
        New ParameterSet; inputs are not modified
    """
    if not 0.0 <= alpha_encoder <= 1.0:
        raise ValueError(f"alpha_encoder must lie in [0, 1], got {alpha_encoder}")
    params.check_congruent(random_template)
    policy = layer_policy or LayerPolicy()

    result = params.copy()
    for name, tensor in result.items():
        action = policy.classify(name)
        fresh = random_template[name].data
        if action == PERTURB:
            dtype = tensor.data.dtype
            tensor.data[...] = dtype.type(1.0 - alpha_encoder) * tensor.data + dtype.type(alpha_encoder) * fresh
        elif action == RESET:
            tensor.data[...] = fresh
    return result


def hard_reset(params: ParameterSet, random_template: ParameterSet) -> ParameterSet:
    """Replace every entry by the template."""
    return shrink_and_perturb(params, random_template, 1.0, LayerPolicy([('', RESET)]))


def draw_template(spec: ArchitectureSpec, seed: int) -> ParameterSet:
    return init_parameters(spec, seed, trainable=False)


def ema_update(bundle: NetworkBundle, tau: float) -> None:
    """
    target <- tau * target + (1 - tau) * online, elementwise and in place.

    Args:
        bundle: Bundle whose target is updated
        tau: Decay in [0, 1]; 1 freezes the target, 0 copies the online network
    """
    if not 0.0 <= tau <= 1.0:
        raise ValueError(f"tau must lie in [0, 1], got {tau}")
    for name, target in bundle.target.items():
        online = bundle.online[name].data
        dtype = target.data.dtype
        target.data[...] = dtype.type(tau) * target.data + dtype.type(1.0 - tau) * online


def parameter_distance(a: ParameterSet, b: ParameterSet) -> float:
    a.check_congruent(b)
    total = sum(float(np.sum((a[name].data.astype(np.float64) - b[name].data) ** 2)) for name in a)
    return float(np.sqrt(total))
