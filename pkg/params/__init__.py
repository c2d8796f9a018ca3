"""
Latent weight parametrizations for latentbin.
"""

from .latent import (
    ParamKind,
    DirectParam,
    SvdParam,
    TuckerParam,
    HolisticGroupParam,
    WeightParam,
    init_direct,
    init_svd,
    init_tucker,
    init_holistic,
    decompose_svd,
    decompose_tucker,
    decompose_holistic,
    reconstruct,
    reconstruct_layer,
    backward_to_factors,
    param_num_elements,
    param_from_arrays,
)
from .grouping import LayerGroup, LayerShapeInfo, plan_groups

__all__ = [
    "ParamKind",
    "DirectParam",
    "SvdParam",
    "TuckerParam",
    "HolisticGroupParam",
    "WeightParam",
    "init_direct",
    "init_svd",
    "init_tucker",
    "init_holistic",
    "decompose_svd",
    "decompose_tucker",
    "decompose_holistic",
    "reconstruct",
    "reconstruct_layer",
    "backward_to_factors",
    "param_num_elements",
    "param_from_arrays",
    "LayerGroup",
    "LayerShapeInfo",
    "plan_groups",
]
