"""
XNOR + popcount kernels.

For {-1, +1} vectors a and b of length n packed as bits,
sum_i a_i * b_i = n - 2 * popcount(a XOR b).
"""

from typing import Tuple

import numpy as np

from bitkernel.packing import PackedBinaryTensor, pack, tail_mask
from core.errors import require
from training.layers import conv_output_size, im2col

BINARY_PAD_VALUE = -1.0
_ROW_CHUNK = 2048


def _masked(words: np.ndarray, valid_bits: int) -> np.ndarray:
    words = words.copy()
    words[..., -1] &= tail_mask(valid_bits)
    return words


def xnor_dot(a: np.ndarray, b: np.ndarray, n: int) -> int:
    """
    Dot product of two packed {-1, +1} rows.

    Args:
        a: Packed words of the first row
        b: Packed words of the second row
        n: Valid bits in each row

    Returns:
        Integer in [-n, n] with the parity of n
    """
    require(a.shape == b.shape and a.ndim == 1, f"row shapes differ: {a.shape} vs {b.shape}")
    require(0 < n <= a.shape[0] * 64, f"valid bit count {n} does not fit {a.shape[0]} words")
    require(a.shape[0] == -(-n // 64), f"{a.shape[0]} words but {n} valid bits")
    diff = _masked(a ^ b, n)
    return n - 2 * int(np.bitwise_count(diff).sum(dtype=np.int64))


def xnor_gemm(a: PackedBinaryTensor, b: PackedBinaryTensor) -> np.ndarray:
    """
    All row-by-row dot products: out[i, j] = <row i of a, row j of b>.

    Returns:
        int64 array (a.rows, b.rows)
    """
    require(
        a.valid_bits == b.valid_bits and a.words_per_row == b.words_per_row,
        f"row lengths differ: {a.valid_bits} vs {b.valid_bits} bits",
    )
    n = a.valid_bits
    bw = _masked(b.words, n)
    out = np.empty((a.rows, b.rows), dtype=np.int64)
    for start in range(0, a.rows, _ROW_CHUNK):
        aw = _masked(a.words[start : start + _ROW_CHUNK], n)
        diff = aw[:, None, :] ^ bw[None, :, :]
        out[start : start + _ROW_CHUNK] = n - 2 * np.bitwise_count(diff).sum(axis=2, dtype=np.int64)
    return out


def binary_conv_counts(
    x_pm1: np.ndarray, weights: PackedBinaryTensor, kernel: int, stride: int, padding: int
) -> np.ndarray:
    """Integer convolution of {-1, +1} activations with packed {-1, +1} filters (N, O, Ho, Wo)."""
    require(x_pm1.ndim == 4, f"expected NCHW activations, got shape {x_pm1.shape}")
    o, c, kh, kw = weights.shape
    require(kh == kernel and kw == kernel, f"packed filters are {kh}x{kw}, geometry says {kernel}")
    require(x_pm1.shape[1] == c, f"activations have {x_pm1.shape[1]} channels, filters expect {c}")
    n = x_pm1.shape[0]
    ho = conv_output_size(x_pm1.shape[2], kernel, stride, padding)
    wo = conv_output_size(x_pm1.shape[3], kernel, stride, padding)
    cols = im2col(x_pm1, kernel, stride, padding, BINARY_PAD_VALUE).reshape(n * ho * wo, -1)
    counts = xnor_gemm(pack(cols), weights)
    return counts.reshape(n, ho, wo, o).transpose(0, 3, 1, 2)


def binary_conv(
    x_pm1: np.ndarray,
    weights: PackedBinaryTensor,
    alpha: np.ndarray,
    geometry: Tuple[int, int, int],
) -> np.ndarray:
    """
    Scaled binary convolution (sign(I) (*) sign(W)) * alpha.

    Args:
        x_pm1: Binarized activations (N, C, H, W) in {-1, +1}
        weights: Packed filters, logical shape (O, C, k, k)
        alpha: Per-output-channel scales (O,)
        geometry: (kernel, stride, padding); padding is filled with -1

    Returns:
        float64 (N, O, Ho, Wo)
    """
    kernel, stride, padding = geometry
    require(alpha.shape == (weights.shape[0],), f"alpha shape {alpha.shape} != ({weights.shape[0]},)")
    counts = binary_conv_counts(x_pm1, weights, kernel, stride, padding)
    return counts * np.asarray(alpha, dtype=np.float64)[None, :, None, None]
