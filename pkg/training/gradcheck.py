"""
Finite-difference verification of the training engine's gradients.

Sign is not differentiable, so the check linearizes it: the STE masks (and the
analytic alphas) seen at the base point are frozen, sign(x) becomes
x * mask, and the engine's analytic gradient of that surrogate is compared with
central differences taken on the same surrogate.
"""

import logging
from dataclasses import dataclass
from typing import Dict, Optional

import numpy as np

from training.engine import compute_gradients
from training.network import Relaxation
from training.state import Architecture, TrainState

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class GradCheckReport:
    max_rel_error: Dict[str, float]  # per flat trainable name
    checked_entries: int

    @property
    def worst(self) -> float:
        return max(self.max_rel_error.values(), default=0.0)


def _relaxed_loss(state, arch, images, labels, relax: Relaxation) -> float:
    return compute_gradients(state, arch, images, labels, relax=relax).loss


def check_gradients(
    state: TrainState,
    arch: Architecture,
    images: np.ndarray,
    labels: np.ndarray,
    eps: float = 1e-6,
    max_entries_per_array: Optional[int] = None,
    seed: int = 0,
    atol: float = 1e-6,
) -> GradCheckReport:
    """
    Compare analytic and central-difference gradients for every trainable array.

    Args:
        state: Base point
        arch: Network description
        images: Minibatch
        labels: Labels
        eps: Perturbation size
        max_entries_per_array: Check a seeded random sample of this many entries per array
        seed: Sampling seed
        atol: Floor of the relative-error denominator

    Returns:
        GradCheckReport with the worst relative error per array
    """
    relax = Relaxation()
    analytic = compute_gradients(state, arch, images, labels, relax=relax).grads
    relax.recording = False

    rng = np.random.default_rng(seed)
    flat = {name: arr.copy() for name, arr in state.trainable().items()}
    errors: Dict[str, float] = {}
    checked = 0
    for name, base in flat.items():
        indices = np.arange(base.size)
        if max_entries_per_array is not None and base.size > max_entries_per_array:
            indices = rng.choice(base.size, size=max_entries_per_array, replace=False)
        worst = 0.0
        for idx in indices:
            pos = np.unravel_index(int(idx), base.shape)
            original = base[pos]
            base[pos] = original + eps
            up = _relaxed_loss(state.with_trainable(flat), arch, images, labels, relax)
            base[pos] = original - eps
            down = _relaxed_loss(state.with_trainable(flat), arch, images, labels, relax)
            base[pos] = original
            numeric = (up - down) / (2.0 * eps)
            exact = analytic[name][pos]
            rel = abs(exact - numeric) / max(abs(exact), abs(numeric), atol)
            worst = max(worst, rel)
            checked += 1
        errors[name] = worst
        logger.debug("gradcheck %s: worst relative error %.3e", name, worst)
    return GradCheckReport(errors, checked)
