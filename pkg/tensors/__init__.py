"""
Tensor algebra for latentbin.
"""

from .algebra import (
    SvdResult,
    unfold,
    fold,
    mode_product,
    svd,
    left_singular_basis,
    tucker_reconstruct,
    partial_reconstruct,
)

__all__ = [
    "SvdResult",
    "unfold",
    "fold",
    "mode_product",
    "svd",
    "left_singular_basis",
    "tucker_reconstruct",
    "partial_reconstruct",
]
