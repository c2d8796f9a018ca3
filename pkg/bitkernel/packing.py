"""
Bit packing of {-1, +1} tensors into 64-bit words.

Rows are the leading axis; each row is the remaining axes flattened row-major.
+1 maps to bit 1, -1 to bit 0, bits fill each little-endian word from the
least significant end, and tail bits past the valid count are zero.
"""

from dataclasses import dataclass
from math import prod
from typing import Tuple

import numpy as np

from core.errors import require

WORD_BITS = 64
WORD_DTYPE = np.dtype("<u8")


@dataclass(frozen=True)
class PackedBinaryTensor:
    shape: Tuple[int, ...]
    words: np.ndarray  # (rows, words_per_row), little-endian uint64
    valid_bits: int  # bits per row

    @property
    def rows(self) -> int:
        return self.words.shape[0]

    @property
    def words_per_row(self) -> int:
        return self.words.shape[1]

    @property
    def nbytes(self) -> int:
        return self.words.nbytes


def words_for(bits: int) -> int:
    return -(-bits // WORD_BITS)


def tail_mask(valid_bits: int) -> np.uint64:
    """Mask of the meaningful bits in the last word of a row."""
    rem = valid_bits % WORD_BITS
    if rem == 0:
        return np.uint64(0xFFFFFFFFFFFFFFFF)
    return np.uint64((1 << rem) - 1)


def pack_bits(bits: np.ndarray) -> np.ndarray:
    """Pack a (rows, n) 0/1 array into (rows, ceil(n/64)) little-endian words."""
    rows, n = bits.shape
    padded = np.zeros((rows, words_for(n) * WORD_BITS), dtype=np.uint8)
    padded[:, :n] = bits
    packed = np.packbits(padded, axis=1, bitorder="little")
    return packed.view(WORD_DTYPE).reshape(rows, -1)


def pack(t: np.ndarray) -> PackedBinaryTensor:
    """
    Pack a {-1, +1} tensor.

    Raises:
        ContractViolation: any entry is not exactly -1 or +1
    """
    t = np.asarray(t)
    require(t.size > 0, "cannot pack an empty tensor")
    require(bool(np.all((t == 1) | (t == -1))), "pack expects values in {-1, +1}")
    mat = t.reshape(1, -1) if t.ndim <= 1 else t.reshape(t.shape[0], -1)
    return PackedBinaryTensor(
        shape=tuple(t.shape),
        words=pack_bits(mat > 0),
        valid_bits=mat.shape[1],
    )


def unpack(p: PackedBinaryTensor) -> np.ndarray:
    """Exact inverse of pack, as float64 {-1, +1}."""
    as_bytes = np.ascontiguousarray(p.words, dtype=WORD_DTYPE).view(np.uint8)
    bits = np.unpackbits(as_bytes, axis=1, count=p.valid_bits, bitorder="little")
    return (2.0 * bits - 1.0).reshape(p.shape)


def repack_rows(p: PackedBinaryTensor, shape: Tuple[int, ...]) -> PackedBinaryTensor:
    """Re-split a packed tensor into rows of the leading axis of `shape`."""
    require(prod(shape) == prod(p.shape), f"cannot view {p.shape} as {shape}")
    return pack(unpack(p).reshape(shape))
