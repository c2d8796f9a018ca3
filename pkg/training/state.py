"""
State schemas for latentbin training.
Layer specifications, the network description and the mutable training state.
"""

from dataclasses import dataclass, field, replace
from enum import StrEnum
from typing import Dict, Iterator, Optional, Tuple

import numpy as np

from binarization.ops import ScaleMode
from params.grouping import LayerGroup
from params.latent import ParamKind, WeightParam


class LayerKind(StrEnum):
    REAL_CONV = "real_conv"
    BINARY_CONV = "binary_conv"
    BATCH_NORM = "batch_norm"
    SIGN_ACTIVATION = "sign"
    RESIDUAL_ADD = "residual_add"
    AVG_POOL = "avg_pool"
    FULLY_CONNECTED = "fully_connected"


class Decomposition(StrEnum):
    NONE = "none"
    SVD = "svd"
    TUCKER = "tucker"
    HOLISTIC = "holistic"


@dataclass(frozen=True)
class LayerSpec:
    """One node of the network graph."""

    # Identity
    name: str
    kind: LayerKind
    macro_module: str = ""

    # Geometry
    in_channels: int = 0
    out_channels: int = 0
    kernel: int = 0  # AvgPool: 0 = global
    stride: int = 1
    padding: int = 0

    # Parameter binding (BinaryConv only)
    param_id: Optional[str] = None
    slice_index: Optional[int] = None  # row of the holistic group
    scale_mode: Optional[ScaleMode] = None

    @property
    def weight_shape(self) -> Tuple[int, int, int, int]:
        return (self.out_channels, self.in_channels, self.kernel, self.kernel)


@dataclass(frozen=True)
class ParamSpec:
    """How one latent parametrization is laid out and which layers read it."""

    kind: ParamKind
    shape: Tuple[int, ...]  # reconstruction shape (5-order for holistic groups)
    layer_ids: Tuple[str, ...]


@dataclass(frozen=True)
class Architecture:
    """
    A network as a sequence of blocks.

    Each block is a sequence of layers; a RESIDUAL_ADD inside a block adds the
    block input (through the shortcut) to the running activation.
    """

    blocks: Tuple[Tuple[LayerSpec, ...], ...]
    input_shape: Tuple[int, int, int]
    num_classes: int
    decomposition: Decomposition
    param_specs: Dict[str, ParamSpec] = field(default_factory=dict)
    groups: Tuple[LayerGroup, ...] = ()

    def layers(self) -> Iterator[LayerSpec]:
        for block in self.blocks:
            yield from block

    def binary_layers(self) -> Tuple[LayerSpec, ...]:
        return tuple(l for l in self.layers() if l.kind is LayerKind.BINARY_CONV)

    def layer(self, name: str) -> LayerSpec:
        for spec in self.layers():
            if spec.name == name:
                return spec
        raise KeyError(name)


# Flat names of trainable arrays
PARAM_PREFIX = "param/"
ALPHA_PREFIX = "alpha/"
REAL_PREFIX = "real/"


@dataclass
class TrainState:
    """Everything training needs to continue; never holds reconstructed weights."""

    # Latent factors, keyed by param id
    params: Dict[str, WeightParam]

    # Learned scaling factors, keyed by binary layer name (learned mode only)
    alphas: Dict[str, np.ndarray]

    # Real-valued layers: conv/fc weights and biases, batch-norm gamma/beta
    real: Dict[str, np.ndarray]

    # Batch-norm running statistics ("<layer>.mean", "<layer>.var")
    bn_stats: Dict[str, np.ndarray]

    # Optimizer moments keyed by flat trainable name: {"m": ..., "v": ...}
    moments: Dict[str, Dict[str, np.ndarray]]

    # Schedule position
    lr: float
    step: int = 0

    def trainable(self) -> Dict[str, np.ndarray]:
        """All trainable arrays under flat names, in a deterministic order."""
        flat: Dict[str, np.ndarray] = {}
        for pid in sorted(self.params):
            for name, arr in self.params[pid].arrays().items():
                flat[f"{PARAM_PREFIX}{pid}/{name}"] = arr
        for layer in sorted(self.alphas):
            flat[f"{ALPHA_PREFIX}{layer}"] = self.alphas[layer]
        for name in sorted(self.real):
            flat[f"{REAL_PREFIX}{name}"] = self.real[name]
        return flat

    def with_trainable(self, flat: Dict[str, np.ndarray], **changes) -> "TrainState":
        """Copy of the state with trainable arrays replaced from a flat mapping."""
        params = {}
        for pid, p in self.params.items():
            prefix = f"{PARAM_PREFIX}{pid}/"
            params[pid] = p.with_arrays(
                {name: flat[prefix + name] for name in p.arrays()}
            )
        alphas = {k: flat[f"{ALPHA_PREFIX}{k}"] for k in self.alphas}
        real = {k: flat[f"{REAL_PREFIX}{k}"] for k in self.real}
        return replace(self, params=params, alphas=alphas, real=real, **changes)
