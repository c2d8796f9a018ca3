"""
Latent real-valued parametrizations of binary convolution weights.

A weight tensor W (O x C x w x h) is never stored for decomposed layers; it is
rebuilt on demand from real factors and binarized downstream. Four variants:
direct, layer-wise SVD, layer-wise Tucker and a holistic Tucker shared by a
group of identically shaped layers.
"""

from dataclasses import dataclass, field, replace
from enum import StrEnum
from math import prod, sqrt
from typing import ClassVar, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from core.errors import require
from tensors.algebra import (
    left_singular_basis,
    mode_product,
    partial_reconstruct,
    svd,
    tucker_reconstruct,
    unfold,
)


class ParamKind(StrEnum):
    DIRECT = "direct"
    SVD = "svd"
    TUCKER = "tucker"
    HOLISTIC = "holistic"


Shape = Tuple[int, ...]


def _validate_shape(shape: Sequence[int], order: int) -> Shape:
    shape = tuple(int(d) for d in shape)
    require(len(shape) == order, f"expected an order-{order} shape, got {shape}")
    require(all(d >= 1 for d in shape), f"extents must be positive: {shape}")
    return shape


@dataclass
class DirectParam:
    """The weight tensor itself (baseline, no decomposition)."""

    w: np.ndarray
    kind: ClassVar[ParamKind] = ParamKind.DIRECT

    @property
    def shape(self) -> Shape:
        return tuple(self.w.shape)

    def arrays(self) -> Dict[str, np.ndarray]:
        return {"w": self.w}

    def with_arrays(self, arrays: Dict[str, np.ndarray]) -> "DirectParam":
        return replace(self, w=arrays["w"])


@dataclass
class SvdParam:
    """W reshaped to O x (C*w*h) equals u @ v; singular values live inside u."""

    u: np.ndarray  # O x K
    v: np.ndarray  # K x (C*w*h)
    shape: Shape
    kind: ClassVar[ParamKind] = ParamKind.SVD

    @property
    def rank(self) -> int:
        return self.u.shape[1]

    def arrays(self) -> Dict[str, np.ndarray]:
        return {"u": self.u, "v": self.v}

    def with_arrays(self, arrays: Dict[str, np.ndarray]) -> "SvdParam":
        return replace(self, u=arrays["u"], v=arrays["v"])


@dataclass
class TuckerParam:
    """Full-rank Tucker: W = core x0 U0 x1 U1 x2 U2 x3 U3 with square factors."""

    core: np.ndarray
    factors: List[np.ndarray] = field(default_factory=list)
    kind: ClassVar[ParamKind] = ParamKind.TUCKER

    @property
    def shape(self) -> Shape:
        return tuple(f.shape[0] for f in self.factors)

    def arrays(self) -> Dict[str, np.ndarray]:
        out = {"core": self.core}
        for k, f in enumerate(self.factors):
            out[f"factor{k}"] = f
        return out

    def with_arrays(self, arrays: Dict[str, np.ndarray]) -> "TuckerParam":
        factors = [arrays[f"factor{k}"] for k in range(len(self.factors))]
        return replace(self, core=arrays["core"], factors=factors)


@dataclass
class HolisticGroupParam(TuckerParam):
    """One Tucker decomposition over N stacked layers (order-5 core, N x O x C x w x h)."""

    kind: ClassVar[ParamKind] = ParamKind.HOLISTIC

    @property
    def layer_count(self) -> int:
        return self.factors[0].shape[0]

    @property
    def layer_shape(self) -> Shape:
        return self.shape[1:]


WeightParam = Union[DirectParam, SvdParam, TuckerParam, HolisticGroupParam]


# ============= Initialization =============


def kaiming_uniform(shape: Sequence[int], rng: np.random.Generator) -> np.ndarray:
    """Uniform(-b, b) with b = sqrt(6 / fan_in), fan_in = prod(shape[1:])."""
    fan_in = prod(shape[1:]) if len(shape) > 1 else 1
    bound = sqrt(6.0 / fan_in)
    return rng.uniform(-bound, bound, size=tuple(shape))


def init_direct(shape: Sequence[int], rng_seed: int) -> DirectParam:
    shape = _validate_shape(shape, 4)
    rng = np.random.default_rng(rng_seed)
    return DirectParam(w=kaiming_uniform(shape, rng))


def decompose_svd(w: np.ndarray, rank: Optional[int] = None) -> SvdParam:
    """
    Truncated SVD of the O x (C*w*h) reshaped weight, singular values absorbed into u.

    Args:
        w: Weight tensor (O, C, w, h)
        rank: Number of components kept (None = min(O, C*w*h))

    Returns:
        SvdParam whose reconstruction is the best rank-`rank` approximation of w
    """
    shape = _validate_shape(w.shape, 4)
    mat = w.reshape(shape[0], -1)
    full = min(mat.shape)
    rank = full if rank is None else int(rank)
    require(1 <= rank <= full, f"rank {rank} out of range [1, {full}] for shape {shape}")
    result = svd(mat)
    u = result.u[:, :rank] * result.s[:rank]
    v = np.ascontiguousarray(result.v[:, :rank].T)
    return SvdParam(u=np.ascontiguousarray(u), v=v, shape=shape)


def init_svd(shape: Sequence[int], rank: Optional[int] = None, rng_seed: int = 0) -> SvdParam:
    shape = _validate_shape(shape, 4)
    full = min(shape[0], prod(shape[1:]))
    if rank is not None:
        require(1 <= rank <= full, f"rank {rank} out of range [1, {full}] for shape {shape}")
    return decompose_svd(init_direct(shape, rng_seed).w, rank)


def _hosvd(w: np.ndarray) -> Tuple[np.ndarray, List[np.ndarray]]:
    factors = [left_singular_basis(unfold(w, k)) for k in range(w.ndim)]
    core = tucker_reconstruct(w, [f.T for f in factors])
    return core, factors


def decompose_tucker(w: np.ndarray) -> TuckerParam:
    """Full-rank HOSVD of a 4-order weight tensor."""
    _validate_shape(w.shape, 4)
    core, factors = _hosvd(w)
    return TuckerParam(core=core, factors=factors)


def init_tucker(shape: Sequence[int], rng_seed: int) -> TuckerParam:
    return decompose_tucker(init_direct(shape, rng_seed).w)


def decompose_holistic(stacked: np.ndarray) -> HolisticGroupParam:
    """Full-rank HOSVD of N stacked layer weights (N, O, C, w, h)."""
    _validate_shape(stacked.shape, 5)
    core, factors = _hosvd(stacked)
    return HolisticGroupParam(core=core, factors=factors)


def init_holistic(group_shape: Sequence[int], rng_seed: int) -> HolisticGroupParam:
    group_shape = _validate_shape(group_shape, 5)
    rng = np.random.default_rng(rng_seed)
    bound = sqrt(6.0 / prod(group_shape[2:]))
    stacked = rng.uniform(-bound, bound, size=group_shape)
    return decompose_holistic(stacked)


# ============= Reconstruction =============


def reconstruct_layer(p: HolisticGroupParam, l: int) -> np.ndarray:
    """Layer `l` of a holistic group, contracting row l of U0 first."""
    require(isinstance(p, HolisticGroupParam), "reconstruct_layer needs a holistic group param")
    require(0 <= l < p.layer_count, f"layer index {l} out of range [0, {p.layer_count})")
    out = mode_product(p.core, p.factors[0][l : l + 1], 0)
    for k in range(1, len(p.factors)):
        out = mode_product(out, p.factors[k], k)
    return out[0]


def reconstruct(p: WeightParam) -> np.ndarray:
    """Real-valued weights from the latent factors."""
    if isinstance(p, DirectParam):
        return p.w
    if isinstance(p, SvdParam):
        return (p.u @ p.v).reshape(p.shape)
    if isinstance(p, HolisticGroupParam):
        # slice-wise so that reconstruct_layer agrees bit for bit
        return np.stack([reconstruct_layer(p, l) for l in range(p.layer_count)])
    if isinstance(p, TuckerParam):
        return tucker_reconstruct(p.core, p.factors)
    raise TypeError(f"unknown weight parametrization: {type(p).__name__}")


def reconstructed_shape(p: WeightParam) -> Shape:
    if isinstance(p, (DirectParam, SvdParam)):
        return tuple(p.shape)
    return p.shape


# ============= Backward =============


def _tucker_factor_grads(
    core: np.ndarray, factors: Sequence[np.ndarray], grad: np.ndarray
) -> Dict[str, np.ndarray]:
    grads = {"core": tucker_reconstruct(grad, [f.T for f in factors])}
    for k in range(len(factors)):
        partial = partial_reconstruct(core, factors, skip=k)
        grads[f"factor{k}"] = unfold(grad, k) @ unfold(partial, k).T
    return grads


def backward_to_factors(p: WeightParam, grad_w: np.ndarray) -> Dict[str, np.ndarray]:
    """
    Chain rule from dC/dW to dC/dTheta for every latent array of `p`.

    Keys match p.arrays().
    """
    expected = reconstructed_shape(p)
    require(
        tuple(grad_w.shape) == tuple(expected),
        f"gradient shape {grad_w.shape} does not match reconstruction {expected}",
    )
    if isinstance(p, DirectParam):
        return {"w": grad_w}
    if isinstance(p, SvdParam):
        g = grad_w.reshape(p.shape[0], -1)
        return {"u": g @ p.v.T, "v": p.u.T @ g}
    if isinstance(p, TuckerParam):
        return _tucker_factor_grads(p.core, p.factors, grad_w)
    raise TypeError(f"unknown weight parametrization: {type(p).__name__}")


# ============= Bookkeeping =============


def param_num_elements(p: WeightParam) -> int:
    return sum(a.size for a in p.arrays().values())


def param_from_arrays(
    kind: ParamKind, arrays: Dict[str, np.ndarray], shape: Sequence[int]
) -> WeightParam:
    """Rebuild a parametrization from its named arrays (checkpoint loading)."""
    kind = ParamKind(kind)
    if kind is ParamKind.DIRECT:
        return DirectParam(w=arrays["w"])
    if kind is ParamKind.SVD:
        return SvdParam(u=arrays["u"], v=arrays["v"], shape=tuple(int(d) for d in shape))
    count = sum(1 for name in arrays if name.startswith("factor"))
    factors = [arrays[f"factor{k}"] for k in range(count)]
    if kind is ParamKind.TUCKER:
        return TuckerParam(core=arrays["core"], factors=factors)
    return HolisticGroupParam(core=arrays["core"], factors=factors)
