"""
Training loop step: reconstruct -> binarize -> forward -> backward -> update.
"""

import logging
from dataclasses import dataclass, replace
from typing import Dict, Optional, Tuple

import numpy as np

from core.errors import DivergedTrainingError, require
from training.layers import loss_cross_entropy
from training.network import (
    ForwardContext,
    Relaxation,
    backward,
    forward,
    materialize_weights,
)
from training.optim import OptimizerHyper, Schedule, optimizer_update, update_learning_rate
from training.state import REAL_PREFIX, Architecture, LayerKind, TrainState

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class Gradients:
    loss: float
    logits: np.ndarray
    grads: Dict[str, np.ndarray]
    bn_stats: Dict[str, np.ndarray]


def compute_gradients(
    state: TrainState,
    arch: Architecture,
    images: np.ndarray,
    labels: np.ndarray,
    bn_momentum: float = 0.1,
    relax: Optional[Relaxation] = None,
) -> Gradients:
    """Loss and gradients of every trainable array for one minibatch (training mode)."""
    require(images.shape[0] > 0, "minibatch is empty")
    weights = materialize_weights(state, arch, relax)
    ctx = ForwardContext(state, weights, training=True, bn_momentum=bn_momentum, relax=relax)
    logits, tape = forward(arch, images, ctx)
    loss, dlogits = loss_cross_entropy(logits, labels)
    grads = backward(arch, tape, dlogits, ctx)
    return Gradients(loss, logits, grads, ctx.new_bn_stats)


def decay_names(arch: Architecture) -> frozenset:
    """Flat names that receive weight decay: real conv and FC weights only."""
    return frozenset(
        f"{REAL_PREFIX}{layer.name}.weight"
        for layer in arch.layers()
        if layer.kind in (LayerKind.REAL_CONV, LayerKind.FULLY_CONNECTED)
    )


def accuracy(logits: np.ndarray, labels: np.ndarray) -> float:
    return float(np.mean(np.argmax(logits, axis=1) == labels))


def train_step(
    state: TrainState,
    arch: Architecture,
    images: np.ndarray,
    labels: np.ndarray,
    hyper: OptimizerHyper,
    schedule: Optional[Schedule] = None,
    steps_per_epoch: int = 1,
    bn_momentum: float = 0.1,
) -> Tuple[TrainState, float, float]:
    """
    One full update of every latent factor, learned alpha and real parameter.

    Args:
        state: Current state (left untouched)
        arch: Network description
        images: Minibatch (N, C, H, W)
        labels: Integer class labels (N,)
        hyper: Optimizer rule and hyper-parameters
        schedule: Learning-rate schedule; None keeps state.lr
        steps_per_epoch: Converts the step counter to an epoch for the schedule
        bn_momentum: Running-statistics momentum

    Returns:
        (new state, loss, batch accuracy)

    Raises:
        DivergedTrainingError: the loss is not finite
    """
    result = compute_gradients(state, arch, images, labels, bn_momentum)
    if not np.isfinite(result.loss):
        raise DivergedTrainingError(state.step, result.loss)

    step = state.step + 1
    params, moments = optimizer_update(
        state.trainable(),
        result.grads,
        state.moments,
        state.lr,
        step,
        hyper,
        decay=decay_names(arch),
    )
    lr = state.lr if schedule is None else update_learning_rate(schedule, step, steps_per_epoch)
    new_state = state.with_trainable(
        params,
        moments=moments,
        bn_stats={**state.bn_stats, **result.bn_stats},
        lr=lr,
        step=step,
    )
    return new_state, result.loss, accuracy(result.logits, labels)


def predict_logits(
    state: TrainState, arch: Architecture, images: np.ndarray, batch_size: int = 256
) -> np.ndarray:
    """Eval-mode logits (running BN statistics)."""
    weights = materialize_weights(state, arch)
    chunks = []
    for start in range(0, images.shape[0], batch_size):
        ctx = ForwardContext(state, weights, training=False)
        logits, _ = forward(arch, images[start : start + batch_size], ctx)
        chunks.append(logits)
    return np.concatenate(chunks) if chunks else np.zeros((0, arch.num_classes))


def evaluate(
    state: TrainState,
    arch: Architecture,
    images: np.ndarray,
    labels: np.ndarray,
    batch_size: int = 256,
) -> Tuple[float, float]:
    """Returns (mean loss, accuracy) in eval mode."""
    require(images.shape[0] > 0, "evaluation set is empty")
    logits = predict_logits(state, arch, images, batch_size)
    loss, _ = loss_cross_entropy(logits, labels)
    return loss, accuracy(logits, labels)


class Trainer:
    """Binds an architecture to its optimizer settings and steps a TrainState."""

    def __init__(
        self,
        arch: Architecture,
        hyper: OptimizerHyper,
        schedule: Optional[Schedule],
        steps_per_epoch: int,
        bn_momentum: float = 0.1,
    ):
        self.arch = arch
        self.hyper = hyper
        self.schedule = schedule
        self.steps_per_epoch = steps_per_epoch
        self.bn_momentum = bn_momentum

    def step(self, state: TrainState, images: np.ndarray, labels: np.ndarray) -> Tuple[TrainState, float, float]:
        return train_step(
            state,
            self.arch,
            images,
            labels,
            self.hyper,
            self.schedule,
            self.steps_per_epoch,
            self.bn_momentum,
        )

    def epoch_of(self, step: int) -> int:
        return step // self.steps_per_epoch

    def with_state_lr(self, state: TrainState) -> TrainState:
        """State with the learning rate the schedule prescribes for its step."""
        if self.schedule is None:
            return state
        return replace(state, lr=update_learning_rate(self.schedule, state.step, self.steps_per_epoch))
