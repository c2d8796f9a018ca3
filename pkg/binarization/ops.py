"""
Binarization primitives.

sign with sign(0) = -1, per-filter scaling factors (analytic mean |W| or
learned), the clipped straight-through estimator and the alpha adjoint.
"""

from dataclasses import dataclass
from enum import StrEnum
from typing import Optional

import numpy as np

from core.errors import require


class ScaleMode(StrEnum):
    ANALYTIC = "analytic"
    LEARNED = "learned"


@dataclass(frozen=True)
class ScaledBinaryWeights:
    """Binary filters b in {-1, +1} with one scale per output channel."""

    b: np.ndarray
    alpha: np.ndarray

    def effective(self) -> np.ndarray:
        """alpha_i * b(i, ...), the weight actually used by the convolution."""
        return self.alpha.reshape((-1,) + (1,) * (self.b.ndim - 1)) * self.b


def sign_binarize(w: np.ndarray) -> np.ndarray:
    require(bool(np.all(np.isfinite(w))), "cannot binarize non-finite values")
    return np.where(w > 0, 1.0, -1.0)


def binarize_activations(x: np.ndarray) -> np.ndarray:
    # no activation scaling factors
    return sign_binarize(x)


def analytic_alpha(w: np.ndarray) -> np.ndarray:
    """alpha_i = ||W(i,:,:,:)||_1 / n with n = C*w*h."""
    require(w.ndim == 4, f"expected a 4-order weight tensor, got shape {w.shape}")
    return np.abs(w).reshape(w.shape[0], -1).mean(axis=1)


def scale_binary(
    w: np.ndarray, mode: ScaleMode, learned_alpha: Optional[np.ndarray] = None
) -> ScaledBinaryWeights:
    """
    Binarize `w` and attach per-filter scales.

    Args:
        w: Real pre-binarization weights (O, C, w, h)
        mode: ANALYTIC computes alpha from w; LEARNED uses `learned_alpha`
        learned_alpha: Length-O vector, required iff mode is LEARNED

    Returns:
        ScaledBinaryWeights
    """
    mode = ScaleMode(mode)
    require(w.ndim == 4, f"expected a 4-order weight tensor, got shape {w.shape}")
    if mode is ScaleMode.LEARNED:
        require(learned_alpha is not None, "learned scale mode needs an alpha vector")
        require(
            learned_alpha.shape == (w.shape[0],),
            f"alpha has shape {learned_alpha.shape}, expected ({w.shape[0]},)",
        )
        alpha = np.asarray(learned_alpha, dtype=np.float64)
    else:
        require(learned_alpha is None, "analytic scale mode takes no alpha vector")
        alpha = analytic_alpha(w)
    return ScaledBinaryWeights(b=sign_binarize(w), alpha=alpha)


def ste_mask(pre_binarization: np.ndarray) -> np.ndarray:
    return np.abs(pre_binarization) <= 1.0


def ste_backward(grad_out: np.ndarray, pre_binarization: np.ndarray) -> np.ndarray:
    """Clipped straight-through estimator: pass the gradient where |x| <= 1."""
    require(
        grad_out.shape == pre_binarization.shape,
        f"gradient shape {grad_out.shape} != input shape {pre_binarization.shape}",
    )
    return np.where(ste_mask(pre_binarization), grad_out, 0.0)


def alpha_gradient(grad_w_effective: np.ndarray, b: np.ndarray) -> np.ndarray:
    """dC/dalpha_i = sum over filter i of grad * b."""
    require(
        grad_w_effective.shape == b.shape,
        f"gradient shape {grad_w_effective.shape} != binary weight shape {b.shape}",
    )
    return (grad_w_effective * b).reshape(b.shape[0], -1).sum(axis=1)
