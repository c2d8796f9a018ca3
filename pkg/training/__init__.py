"""
Training engine for latentbin.
Hand-written reverse mode over a small pre-activation binary ResNet.
"""

from .state import Architecture, Decomposition, LayerKind, LayerSpec, ParamSpec, TrainState
from .network import (
    build_architecture,
    reference_architecture,
    init_train_state,
    materialize_weights,
    forward_block,
    backward_block,
)
from .optim import OptimizerHyper, OptimizerName, Schedule, optimizer_update
from .engine import Trainer, train_step, compute_gradients, evaluate, predict_logits
from .gradcheck import check_gradients

__all__ = [
    "Architecture",
    "Decomposition",
    "LayerKind",
    "LayerSpec",
    "ParamSpec",
    "TrainState",
    "build_architecture",
    "reference_architecture",
    "init_train_state",
    "materialize_weights",
    "forward_block",
    "backward_block",
    "OptimizerHyper",
    "OptimizerName",
    "Schedule",
    "optimizer_update",
    "Trainer",
    "train_step",
    "compute_gradients",
    "evaluate",
    "predict_logits",
    "check_gradients",
]
