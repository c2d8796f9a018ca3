"""
Bit-packed inference: XNOR + popcount kernels and the frozen model format.
"""

from .packing import PackedBinaryTensor, pack, unpack
from .kernels import binary_conv, xnor_dot, xnor_gemm
from .frozen import (
    FrozenBinaryModel,
    FrozenKind,
    export_model,
    load_frozen,
    payload_audit,
    save_frozen,
)
from .bench import benchmark_kernel, format_report

__all__ = [
    "PackedBinaryTensor",
    "pack",
    "unpack",
    "binary_conv",
    "xnor_dot",
    "xnor_gemm",
    "FrozenBinaryModel",
    "FrozenKind",
    "export_model",
    "load_frozen",
    "payload_audit",
    "save_frozen",
    "benchmark_kernel",
    "format_report",
]
