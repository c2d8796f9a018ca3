"""
Parameter update rules and learning-rate schedule.
"""

from dataclasses import dataclass
from enum import StrEnum
from typing import Collection, Dict, Sequence, Tuple

import numpy as np

from core.errors import require


class OptimizerName(StrEnum):
    ADAM = "adam"
    RMSPROP = "rmsprop"


@dataclass(frozen=True)
class OptimizerHyper:
    name: OptimizerName = OptimizerName.ADAM
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    rmsprop_alpha: float = 0.99
    weight_decay: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "name", OptimizerName(self.name))


Moments = Dict[str, Dict[str, np.ndarray]]


def init_moments(params: Dict[str, np.ndarray]) -> Moments:
    return {name: {"m": np.zeros_like(p), "v": np.zeros_like(p)} for name, p in params.items()}


def optimizer_update(
    params: Dict[str, np.ndarray],
    grads: Dict[str, np.ndarray],
    moments: Moments,
    lr: float,
    step: int,
    hyper: OptimizerHyper,
    decay: Collection[str] = (),
) -> Tuple[Dict[str, np.ndarray], Moments]:
    """
    One Adam or RMSProp update.

    Args:
        params: Flat name -> array
        grads: Gradients with the same names and shapes
        moments: First ("m") and second ("v") moment buffers per name
        lr: Learning rate for this step
        step: 1-based index of this update (Adam bias correction)
        hyper: Rule and its hyper-parameters
        decay: Names receiving L2 weight decay

    Returns:
        (new params, new moments); inputs are not modified
    """
    require(step >= 1, f"update step must be >= 1, got {step}")
    require(set(grads) == set(params), f"gradient names differ from parameters: {sorted(set(grads) ^ set(params))}")
    require(set(moments) == set(params), f"moment names differ from parameters: {sorted(set(moments) ^ set(params))}")
    new_params: Dict[str, np.ndarray] = {}
    new_moments: Moments = {}
    for name, p in params.items():
        g = grads[name]
        require(g.shape == p.shape, f"{name}: gradient {g.shape} != parameter {p.shape}")
        if name in decay and hyper.weight_decay:
            g = g + hyper.weight_decay * p
        m, v = moments[name]["m"], moments[name]["v"]
        if hyper.name is OptimizerName.ADAM:
            m = hyper.beta1 * m + (1.0 - hyper.beta1) * g
            v = hyper.beta2 * v + (1.0 - hyper.beta2) * g * g
            m_hat = m / (1.0 - hyper.beta1**step)
            v_hat = v / (1.0 - hyper.beta2**step)
            update = m_hat / (np.sqrt(v_hat) + hyper.eps)
        else:
            v = hyper.rmsprop_alpha * v + (1.0 - hyper.rmsprop_alpha) * g * g
            update = g / (np.sqrt(v) + hyper.eps)
        new_params[name] = p - lr * update
        new_moments[name] = {"m": m, "v": v}
    return new_params, new_moments


@dataclass(frozen=True)
class Schedule:
    """Step schedule: initial_lr times every multiplier whose epoch has been reached."""

    initial_lr: float
    drops: Tuple[Tuple[int, float], ...] = ()

    def __post_init__(self):
        require(self.initial_lr > 0, f"initial learning rate must be positive, got {self.initial_lr}")
        epochs = [e for e, _ in self.drops]
        require(
            all(a < b for a, b in zip(epochs, epochs[1:])),
            f"drop epochs must be strictly increasing: {epochs}",
        )
        require(
            all(0 < m <= 1 for _, m in self.drops),
            "drop multipliers must lie in (0, 1]",
        )

    @classmethod
    def from_pairs(cls, initial_lr: float, drops: Sequence[Tuple[int, float]]) -> "Schedule":
        return cls(initial_lr, tuple((int(e), float(m)) for e, m in drops))

    def lr_at(self, epoch: int) -> float:
        lr = self.initial_lr
        for drop_epoch, multiplier in self.drops:
            if epoch >= drop_epoch:
                lr *= multiplier
        return lr


def update_learning_rate(schedule: Schedule, step: int, steps_per_epoch: int) -> float:
    """Learning rate for the update following `step` completed updates."""
    require(steps_per_epoch >= 1, "steps_per_epoch must be positive")
    return schedule.lr_at(step // steps_per_epoch)
