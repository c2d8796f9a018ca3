"""
Frozen inference model.

Only binarized, packed weights and their alphas survive export; latent factors
are neither used nor stored. Batch norm is kept as is (not folded) so the
frozen graph matches the eval-mode training graph.
"""

import logging
import struct
from dataclasses import dataclass, field
from enum import IntEnum
from pathlib import Path
from typing import Dict, List, Tuple, Union

import numpy as np

from binarization.ops import ScaleMode, binarize_activations, scale_binary
from bitkernel.packing import PackedBinaryTensor, pack, repack_rows, words_for
from bitkernel.kernels import binary_conv
from core.errors import FrozenModelFormatError, require
from monitoring.tracing import trace_stage
from training.layers import (
    avg_pool_forward,
    batch_norm_forward,
    conv_forward,
    fc_forward,
    shortcut_forward,
)
from training.network import layer_weights
from training.state import Architecture, LayerKind, LayerSpec, TrainState

logger = logging.getLogger(__name__)

MAGIC = b"BNCV"
FORMAT_VERSION = 1

_HEADER = struct.Struct("<4sHH")
_LAYER = struct.Struct("<B5I")
_BITS = struct.Struct("<QQ")


class FrozenKind(IntEnum):
    REAL_CONV = 1
    BINARY_CONV = 2
    BATCH_NORM = 3
    SIGN = 4
    RESIDUAL_ADD = 5
    AVG_POOL = 6
    FULLY_CONNECTED = 7
    BLOCK_START = 8


_FROM_LAYER_KIND = {
    LayerKind.REAL_CONV: FrozenKind.REAL_CONV,
    LayerKind.BINARY_CONV: FrozenKind.BINARY_CONV,
    LayerKind.BATCH_NORM: FrozenKind.BATCH_NORM,
    LayerKind.SIGN_ACTIVATION: FrozenKind.SIGN,
    LayerKind.RESIDUAL_ADD: FrozenKind.RESIDUAL_ADD,
    LayerKind.AVG_POOL: FrozenKind.AVG_POOL,
    LayerKind.FULLY_CONNECTED: FrozenKind.FULLY_CONNECTED,
}


@dataclass(frozen=True)
class Geometry:
    in_channels: int = 0
    out_channels: int = 0
    kernel: int = 0
    stride: int = 1
    padding: int = 0

    def as_tuple(self) -> Tuple[int, int, int, int, int]:
        return (self.in_channels, self.out_channels, self.kernel, self.stride, self.padding)


@dataclass
class FrozenLayer:
    kind: FrozenKind
    geometry: Geometry = field(default_factory=Geometry)
    weights: PackedBinaryTensor = None  # BINARY_CONV only
    alpha: np.ndarray = None  # BINARY_CONV only, float32 values
    arrays: Dict[str, np.ndarray] = field(default_factory=dict)  # real-valued payload
    name: str = ""


# Real-valued payload order per kind, as written to disk
_REAL_FIELDS = {
    FrozenKind.REAL_CONV: ("weight",),
    FrozenKind.BATCH_NORM: ("gamma", "beta", "mean", "var"),
    FrozenKind.FULLY_CONNECTED: ("weight", "bias"),
}


def _real_shapes(kind: FrozenKind, g: Geometry) -> Dict[str, Tuple[int, ...]]:
    if kind is FrozenKind.REAL_CONV:
        return {"weight": (g.out_channels, g.in_channels, g.kernel, g.kernel)}
    if kind is FrozenKind.BATCH_NORM:
        return {name: (g.in_channels,) for name in _REAL_FIELDS[kind]}
    if kind is FrozenKind.FULLY_CONNECTED:
        return {"weight": (g.out_channels, g.in_channels), "bias": (g.out_channels,)}
    return {}


@dataclass
class FrozenBinaryModel:
    layers: List[FrozenLayer]

    @property
    def binary_layers(self) -> List[FrozenLayer]:
        return [l for l in self.layers if l.kind is FrozenKind.BINARY_CONV]

    @trace_stage(name="infer")
    def predict(self, x: np.ndarray) -> np.ndarray:
        """Logits for a batch (N, C, H, W) through XNOR convolutions and retained batch norm."""
        require(x.ndim == 4, f"expected NCHW input, got shape {x.shape}")
        block_input = x
        for layer in self.layers:
            x, block_input = _run_layer(layer, x, block_input)
        return x


def _run_layer(layer: FrozenLayer, x: np.ndarray, block_input: np.ndarray):
    g = layer.geometry
    kind = layer.kind
    if kind is FrozenKind.BLOCK_START:
        return x, x
    if kind is FrozenKind.REAL_CONV:
        out, _ = conv_forward(x, layer.arrays["weight"], g.stride, g.padding)
        return out, block_input
    if kind is FrozenKind.BINARY_CONV:
        alpha = layer.alpha.astype(np.float64)
        return binary_conv(x, layer.weights, alpha, (g.kernel, g.stride, g.padding)), block_input
    if kind is FrozenKind.BATCH_NORM:
        a = layer.arrays
        out, _, _, _ = batch_norm_forward(x, a["gamma"], a["beta"], a["mean"], a["var"], training=False)
        return out, block_input
    if kind is FrozenKind.SIGN:
        return binarize_activations(x), block_input
    if kind is FrozenKind.RESIDUAL_ADD:
        return x + shortcut_forward(block_input, g.out_channels, g.stride), block_input
    if kind is FrozenKind.AVG_POOL:
        return avg_pool_forward(x, g.kernel), block_input
    if kind is FrozenKind.FULLY_CONNECTED:
        a = layer.arrays
        return fc_forward(x.reshape(x.shape[0], -1), a["weight"], a["bias"]), block_input
    raise FrozenModelFormatError(f"unknown layer kind {kind}")


# ============= Export =============


def _geometry(layer: LayerSpec) -> Geometry:
    return Geometry(layer.in_channels, layer.out_channels, layer.kernel, layer.stride, layer.padding)


def _freeze_layer(state: TrainState, layer: LayerSpec) -> FrozenLayer:
    kind = _FROM_LAYER_KIND[layer.kind]
    frozen = FrozenLayer(kind, _geometry(layer), name=layer.name)
    if kind is FrozenKind.BINARY_CONV:
        pre = layer_weights(state, layer)
        learned = state.alphas.get(layer.name) if layer.scale_mode is ScaleMode.LEARNED else None
        scaled = scale_binary(pre, layer.scale_mode, learned)
        frozen.weights = pack(scaled.b)
        frozen.alpha = scaled.alpha.astype(np.float32)
    elif kind is FrozenKind.BATCH_NORM:
        frozen.arrays = {
            "gamma": state.real[f"{layer.name}.gamma"].copy(),
            "beta": state.real[f"{layer.name}.beta"].copy(),
            "mean": state.bn_stats[f"{layer.name}.mean"].copy(),
            "var": state.bn_stats[f"{layer.name}.var"].copy(),
        }
    elif kind in _REAL_FIELDS:
        frozen.arrays = {name: state.real[f"{layer.name}.{name}"].copy() for name in _REAL_FIELDS[kind]}
    return frozen


@trace_stage(name="export")
def export_model(state: TrainState, arch: Architecture) -> FrozenBinaryModel:
    """
    Freeze a trained state for inference.

    Every binary layer is reconstructed from its factors, sign-binarized and
    packed; alpha is the learned vector or the analytic one, per layer mode.
    """
    layers: List[FrozenLayer] = []
    for block in arch.blocks:
        layers.append(FrozenLayer(FrozenKind.BLOCK_START))
        layers.extend(_freeze_layer(state, layer) for layer in block)
    model = FrozenBinaryModel(layers)
    logger.info(
        "exported %d layers (%d binary, %d payload bytes)",
        len(layers),
        len(model.binary_layers),
        sum(a.payload_bytes for a in payload_audit(model)),
    )
    return model


# ============= File format =============


def _write_layer(out: bytearray, layer: FrozenLayer) -> None:
    out += _LAYER.pack(int(layer.kind), *layer.geometry.as_tuple())
    if layer.kind is FrozenKind.BINARY_CONV:
        stream = repack_rows(layer.weights, (_bits(layer.weights),))
        out += np.asarray(layer.alpha, dtype="<f4").tobytes()
        out += _BITS.pack(stream.valid_bits, stream.words.size)
        out += stream.words.astype("<u8").tobytes()
    for name in _REAL_FIELDS.get(layer.kind, ()):
        out += np.asarray(layer.arrays[name], dtype="<f8").tobytes()


def _bits(p: PackedBinaryTensor) -> int:
    return p.rows * p.valid_bits


def to_bytes(model: FrozenBinaryModel) -> bytes:
    require(len(model.layers) < 1 << 16, "too many layers for the frozen format")
    out = bytearray(_HEADER.pack(MAGIC, FORMAT_VERSION, len(model.layers)))
    for layer in model.layers:
        _write_layer(out, layer)
    return bytes(out)


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.offset = 0

    def take(self, n: int) -> bytes:
        if self.offset + n > len(self.data):
            raise FrozenModelFormatError(
                f"truncated frozen model: need {n} bytes at offset {self.offset}, file has {len(self.data)}"
            )
        chunk = self.data[self.offset : self.offset + n]
        self.offset += n
        return chunk

    def unpack(self, fmt: struct.Struct) -> tuple:
        return fmt.unpack(self.take(fmt.size))

    def array(self, dtype: str, count: int) -> np.ndarray:
        dt = np.dtype(dtype)
        return np.frombuffer(self.take(dt.itemsize * count), dtype=dt).copy()


def _read_layer(reader: _Reader) -> FrozenLayer:
    raw_kind, *geometry = reader.unpack(_LAYER)
    try:
        kind = FrozenKind(raw_kind)
    except ValueError:
        raise FrozenModelFormatError(f"unknown layer kind {raw_kind} at offset {reader.offset - _LAYER.size}")
    g = Geometry(*geometry)
    layer = FrozenLayer(kind, g)
    if kind is FrozenKind.BINARY_CONV:
        shape = (g.out_channels, g.in_channels, g.kernel, g.kernel)
        layer.alpha = reader.array("<f4", g.out_channels)
        valid_bits, word_count = reader.unpack(_BITS)
        expected = g.out_channels * g.in_channels * g.kernel * g.kernel
        if valid_bits != expected or word_count != words_for(expected):
            raise FrozenModelFormatError(
                f"binary layer declares {valid_bits} bits in {word_count} words, geometry needs {expected}"
            )
        words = reader.array("<u8", word_count).reshape(1, -1)
        stream = PackedBinaryTensor((expected,), words, expected)
        layer.weights = repack_rows(stream, shape)
    for name, shape in _real_shapes(kind, g).items():
        layer.arrays[name] = reader.array("<f8", int(np.prod(shape))).reshape(shape)
    return layer


def from_bytes(data: bytes) -> FrozenBinaryModel:
    reader = _Reader(data)
    magic, version, count = reader.unpack(_HEADER)
    if magic != MAGIC:
        raise FrozenModelFormatError(f"bad magic {magic!r}, expected {MAGIC!r}")
    if version != FORMAT_VERSION:
        raise FrozenModelFormatError(f"unsupported frozen model version {version}")
    layers = [_read_layer(reader) for _ in range(count)]
    if reader.offset != len(data):
        raise FrozenModelFormatError(f"{len(data) - reader.offset} trailing bytes after {count} layers")
    return FrozenBinaryModel(layers)


def save_frozen(model: FrozenBinaryModel, path: Union[str, Path]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(to_bytes(model))
    logger.info("wrote frozen model to %s", path)
    return path


def load_frozen(path: Union[str, Path]) -> FrozenBinaryModel:
    return from_bytes(Path(path).read_bytes())


# ============= Size audit =============


@dataclass(frozen=True)
class LayerAudit:
    name: str
    payload_bytes: int  # record header + alpha + bit count header + words
    float32_bytes: int  # the same filters stored as float32

    @property
    def ratio(self) -> float:
        return self.float32_bytes / self.payload_bytes


def payload_audit(model: FrozenBinaryModel) -> List[LayerAudit]:
    """On-disk bytes of each binary layer against its float32 equivalent."""
    audits = []
    for i, layer in enumerate(model.binary_layers):
        g = layer.geometry
        n = g.out_channels * g.in_channels * g.kernel * g.kernel
        size = _LAYER.size + 4 * g.out_channels + _BITS.size + 8 * words_for(n)
        audits.append(LayerAudit(layer.name or f"binary{i}", size, 4 * n))
    return audits
