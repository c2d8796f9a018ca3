"""
Dense tensor algebra for latentbin.
Unfolding/folding, n-mode products, SVD with a pinned sign convention,
and Tucker reconstruction. Tensors are float64 numpy arrays.
"""

from dataclasses import dataclass
from math import prod
from typing import Sequence

import numpy as np
import tensorly as tl
from scipy import linalg

from core.errors import require


@dataclass(frozen=True)
class SvdResult:
    """Thin SVD m = u @ diag(s) @ v.T with s non-increasing."""

    u: np.ndarray  # (m, k)
    s: np.ndarray  # (k,)
    v: np.ndarray  # (n, k)

    def reconstruct(self) -> np.ndarray:
        return (self.u * self.s) @ self.v.T


def unfold(t: np.ndarray, mode: int) -> np.ndarray:
    """
    Mode-`mode` unfolding of `t`.

    Rows are indexed by the `mode` axis; the remaining indices vary in their
    original row-major order along the columns.

    Args:
        t: Tensor of order >= 1
        mode: Axis to unfold along, 0 <= mode < t.ndim

    Returns:
        Matrix of shape (t.shape[mode], prod(other extents))
    """
    require(0 <= mode < t.ndim, f"mode {mode} out of range for order-{t.ndim} tensor")
    return tl.unfold(t, mode)


def fold(m: np.ndarray, mode: int, shape: Sequence[int]) -> np.ndarray:
    """Inverse of unfold: refold a mode-`mode` unfolding into `shape`."""
    shape = tuple(int(d) for d in shape)
    require(m.ndim == 2, f"fold expects a matrix, got order {m.ndim}")
    require(0 <= mode < len(shape), f"mode {mode} out of range for shape {shape}")
    require(all(d >= 1 for d in shape), f"extents must be positive: {shape}")
    rest = prod(shape) // shape[mode]
    require(
        m.shape == (shape[mode], rest),
        f"matrix {m.shape} inconsistent with shape {shape} at mode {mode}",
    )
    return np.ascontiguousarray(tl.fold(m, mode, shape))


def mode_product(t: np.ndarray, m: np.ndarray, mode: int) -> np.ndarray:
    """
    n-mode product t x_mode m.

    result(..., r, ...) = sum_k m(r, k) * t(..., k, ...)
    """
    require(0 <= mode < t.ndim, f"mode {mode} out of range for order-{t.ndim} tensor")
    require(m.ndim == 2, f"mode product expects a matrix, got order {m.ndim}")
    require(
        m.shape[1] == t.shape[mode],
        f"matrix has {m.shape[1]} columns but mode {mode} has extent {t.shape[mode]}",
    )
    return np.ascontiguousarray(tl.tenalg.mode_dot(t, m, mode))


def _fix_signs(u: np.ndarray, vh: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    # largest-magnitude entry of each u column made positive
    if u.size == 0:
        return u, vh
    pivots = np.argmax(np.abs(u), axis=0)
    signs = np.sign(u[pivots, np.arange(u.shape[1])])
    signs[signs == 0] = 1.0
    u = u * signs
    k = min(vh.shape[0], signs.shape[0])
    vh = vh.copy()
    vh[:k] *= signs[:k, None]
    return u, vh


def svd(m: np.ndarray) -> SvdResult:
    """
    Thin SVD with reproducible signs.

    Args:
        m: Finite real matrix (rows x cols)

    Returns:
        SvdResult with k = min(rows, cols)
    """
    require(m.ndim == 2, f"svd expects a matrix, got order {m.ndim}")
    require(bool(np.all(np.isfinite(m))), "svd input contains non-finite values")
    u, s, vh = linalg.svd(np.asarray(m, dtype=np.float64), full_matrices=False)
    u, vh = _fix_signs(u, vh)
    return SvdResult(u=u, s=s, v=vh.T)


def left_singular_basis(m: np.ndarray) -> np.ndarray:
    """Square orthogonal matrix of left singular vectors of `m` (full SVD, same sign rule)."""
    require(m.ndim == 2, f"expected a matrix, got order {m.ndim}")
    require(bool(np.all(np.isfinite(m))), "input contains non-finite values")
    u, _, vh = linalg.svd(np.asarray(m, dtype=np.float64), full_matrices=True)
    u, _ = _fix_signs(u, vh)
    return u


def tucker_reconstruct(core: np.ndarray, factors: Sequence[np.ndarray]) -> np.ndarray:
    """
    Contract `core` with one factor per mode, modes applied in order 0..N-1.

    Output extent k equals factors[k].shape[0].
    """
    require(
        len(factors) == core.ndim,
        f"{len(factors)} factors given for an order-{core.ndim} core",
    )
    out = core
    for k, factor in enumerate(factors):
        require(
            factor.ndim == 2 and factor.shape[1] == core.shape[k],
            f"factor {k} has shape {factor.shape}, core extent is {core.shape[k]}",
        )
        out = mode_product(out, factor, k)
    return out


def partial_reconstruct(core: np.ndarray, factors: Sequence[np.ndarray], skip: int) -> np.ndarray:
    """Tucker contraction over every mode except `skip`."""
    out = core
    for k, factor in enumerate(factors):
        if k != skip:
            out = mode_product(out, factor, k)
    return out
