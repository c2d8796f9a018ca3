"""
Weight and activation binarization for latentbin.
"""

from .ops import (
    ScaleMode,
    ScaledBinaryWeights,
    sign_binarize,
    binarize_activations,
    analytic_alpha,
    scale_binary,
    ste_mask,
    ste_backward,
    alpha_gradient,
)

__all__ = [
    "ScaleMode",
    "ScaledBinaryWeights",
    "sign_binarize",
    "binarize_activations",
    "analytic_alpha",
    "scale_binary",
    "ste_mask",
    "ste_backward",
    "alpha_gradient",
]
