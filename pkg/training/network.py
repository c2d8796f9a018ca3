"""
Binary CNN graph: construction, parameter initialization, forward and backward.

Binary layers follow the pre-activation ordering BN -> sign -> binary conv,
with the block input added back through the shortcut. Latent weights are
reconstructed and binarized on demand for every pass.
"""

import logging
from dataclasses import dataclass, field, replace
from math import prod, sqrt
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from binarization.ops import (
    ScaleMode,
    alpha_gradient,
    analytic_alpha,
    binarize_activations,
    sign_binarize,
    ste_mask,
)
from core.errors import require
from params.grouping import LayerShapeInfo, plan_groups
from params.latent import (
    HolisticGroupParam,
    ParamKind,
    WeightParam,
    backward_to_factors,
    init_direct,
    init_holistic,
    init_svd,
    init_tucker,
    reconstruct,
    reconstruct_layer,
)
from training.layers import (
    avg_pool_backward,
    avg_pool_forward,
    batch_norm_backward,
    batch_norm_forward,
    conv_backward,
    conv_forward,
    fc_backward,
    fc_forward,
    shortcut_backward,
    shortcut_forward,
)
from training.optim import init_moments
from training.state import (
    ALPHA_PREFIX,
    PARAM_PREFIX,
    REAL_PREFIX,
    Architecture,
    Decomposition,
    LayerKind,
    LayerSpec,
    ParamSpec,
    TrainState,
)

logger = logging.getLogger(__name__)

BINARY_PAD_VALUE = -1.0

_PARAM_KIND = {
    Decomposition.NONE: ParamKind.DIRECT,
    Decomposition.SVD: ParamKind.SVD,
    Decomposition.TUCKER: ParamKind.TUCKER,
    Decomposition.HOLISTIC: ParamKind.TUCKER,  # fallback for ungrouped layers
}


# ============= Construction =============


def _conv(name, kind, module, cin, cout, stride=1, kernel=3, scale_mode=None) -> LayerSpec:
    return LayerSpec(
        name=name,
        kind=kind,
        macro_module=module,
        in_channels=cin,
        out_channels=cout,
        kernel=kernel,
        stride=stride,
        padding=kernel // 2,
        scale_mode=scale_mode,
    )


def _basic_block(name, module, cin, cout, stride, scale_mode) -> Tuple[LayerSpec, ...]:
    return (
        LayerSpec(f"{name}.bn1", LayerKind.BATCH_NORM, module, cin, cin),
        LayerSpec(f"{name}.sign1", LayerKind.SIGN_ACTIVATION, module, cin, cin),
        _conv(f"{name}.conv1", LayerKind.BINARY_CONV, module, cin, cout, stride, scale_mode=scale_mode),
        LayerSpec(f"{name}.bn2", LayerKind.BATCH_NORM, module, cout, cout),
        LayerSpec(f"{name}.sign2", LayerKind.SIGN_ACTIVATION, module, cout, cout),
        _conv(f"{name}.conv2", LayerKind.BINARY_CONV, module, cout, cout, scale_mode=scale_mode),
        LayerSpec(f"{name}.add", LayerKind.RESIDUAL_ADD, module, cin, cout, stride=stride),
    )


def build_architecture(
    decomposition: Decomposition,
    scale_mode: ScaleMode,
    *,
    in_channels: int = 1,
    image_size: int = 28,
    num_classes: int = 10,
    stem_width: Optional[int] = 16,
    stage_widths: Sequence[int] = (32,),
    blocks_per_stage: int = 2,
    binarize_stem: bool = False,
) -> Architecture:
    """
    Build a pre-activation binary ResNet.

    The defaults give the reference network: real 3x3 stem to 16 channels, one
    stage of two basic blocks (16->32 with stride 2, then 32->32), batch norm,
    global average pooling and a real fully-connected classifier.

    Args:
        decomposition: Latent parametrization of the binary convolutions
        scale_mode: Analytic or learned per-filter scaling
        in_channels: Input image channels
        image_size: Input height and width
        num_classes: Classifier outputs
        stem_width: Channels after the stem convolution (None: no stem)
        stage_widths: Output channels of each stage
        blocks_per_stage: Basic blocks per stage; the first one changes width
        binarize_stem: Make the stem a binary convolution over sign(input)

    Returns:
        Architecture with parameter bindings resolved
    """
    decomposition = Decomposition(decomposition)
    scale_mode = ScaleMode(scale_mode)
    require(blocks_per_stage >= 1, "blocks_per_stage must be positive")
    blocks: List[Tuple[LayerSpec, ...]] = []
    channels, size = in_channels, image_size

    if stem_width is not None:
        if binarize_stem:
            stem = (
                LayerSpec("stem.sign", LayerKind.SIGN_ACTIVATION, "stem", channels, channels),
                _conv("stem.conv", LayerKind.BINARY_CONV, "stem", channels, stem_width, scale_mode=scale_mode),
            )
        else:
            stem = (_conv("stem.conv", LayerKind.REAL_CONV, "stem", channels, stem_width),)
        blocks.append(stem)
        channels = stem_width

    for s, width in enumerate(stage_widths):
        module = f"stage{s + 1}"
        for b in range(blocks_per_stage):
            stride = 2 if (b == 0 and width != channels) else 1
            if stride == 2:
                require(size % 2 == 0, f"{module}: cannot downsample odd size {size}")
                size //= 2
            blocks.append(_basic_block(f"{module}.block{b + 1}", module, channels, width, stride, scale_mode))
            channels = width

    blocks.append(
        (
            LayerSpec("head.bn", LayerKind.BATCH_NORM, "head", channels, channels),
            LayerSpec("head.pool", LayerKind.AVG_POOL, "head", channels, channels, kernel=0),
            LayerSpec("head.fc", LayerKind.FULLY_CONNECTED, "head", channels, num_classes),
        )
    )
    arch = Architecture(
        blocks=tuple(blocks),
        input_shape=(in_channels, image_size, image_size),
        num_classes=num_classes,
        decomposition=decomposition,
    )
    return _bind_params(arch)


def _bind_params(arch: Architecture) -> Architecture:
    binary = arch.binary_layers()
    bindings: Dict[str, Tuple[str, Optional[int]]] = {}
    specs: Dict[str, ParamSpec] = {}
    groups = ()

    if arch.decomposition is Decomposition.HOLISTIC:
        infos = [LayerShapeInfo(l.name, l.macro_module, l.weight_shape) for l in binary]
        planned, fallback = plan_groups(infos)
        groups = tuple(planned)
        for group in planned:
            specs[group.group_id] = ParamSpec(ParamKind.HOLISTIC, group.group_shape, group.layer_ids)
            for i, layer_id in enumerate(group.layer_ids):
                bindings[layer_id] = (group.group_id, i)
        ungrouped = set(fallback)
    else:
        ungrouped = {l.name for l in binary}

    for layer in binary:
        if layer.name in ungrouped:
            specs[layer.name] = ParamSpec(_PARAM_KIND[arch.decomposition], layer.weight_shape, (layer.name,))
            bindings[layer.name] = (layer.name, None)

    blocks = tuple(
        tuple(
            replace(l, param_id=bindings[l.name][0], slice_index=bindings[l.name][1])
            if l.kind is LayerKind.BINARY_CONV
            else l
            for l in block
        )
        for block in arch.blocks
    )
    logger.debug(
        "bound %d binary layers to %d %s parametrizations (%d holistic groups)",
        len(binary),
        len(specs),
        arch.decomposition,
        len(groups),
    )
    return replace(arch, blocks=blocks, param_specs=specs, groups=groups)


def reference_architecture(decomposition: Decomposition, scale_mode: ScaleMode) -> Architecture:
    return build_architecture(decomposition, scale_mode)


# ============= Initialization =============


def _seeds(seed: int, count: int) -> List[int]:
    children = np.random.SeedSequence(seed).spawn(count)
    return [int(c.generate_state(1)[0]) for c in children]


def _init_param(spec: ParamSpec, seed: int, svd_rank: Optional[int]) -> WeightParam:
    if spec.kind is ParamKind.DIRECT:
        return init_direct(spec.shape, seed)
    if spec.kind is ParamKind.SVD:
        full = min(spec.shape[0], prod(spec.shape[1:]))
        return init_svd(spec.shape, None if svd_rank is None else min(svd_rank, full), seed)
    if spec.kind is ParamKind.TUCKER:
        return init_tucker(spec.shape, seed)
    return init_holistic(spec.shape, seed)


def init_train_state(
    arch: Architecture, seed: int, lr: float, svd_rank: Optional[int] = None
) -> TrainState:
    """Fresh state: Kaiming-equivalent latent factors, analytic alpha, unit BN."""
    layers = list(arch.layers())
    seeds = _seeds(seed, len(arch.param_specs) + len(layers))
    params = {
        pid: _init_param(spec, seeds[i], svd_rank)
        for i, (pid, spec) in enumerate(sorted(arch.param_specs.items()))
    }
    layer_seeds = seeds[len(arch.param_specs) :]

    real: Dict[str, np.ndarray] = {}
    bn_stats: Dict[str, np.ndarray] = {}
    for layer, layer_seed in zip(layers, layer_seeds):
        rng = np.random.default_rng(layer_seed)
        if layer.kind is LayerKind.REAL_CONV:
            bound = sqrt(6.0 / (layer.in_channels * layer.kernel * layer.kernel))
            real[f"{layer.name}.weight"] = rng.uniform(-bound, bound, size=layer.weight_shape)
        elif layer.kind is LayerKind.FULLY_CONNECTED:
            bound = sqrt(6.0 / layer.in_channels)
            real[f"{layer.name}.weight"] = rng.uniform(
                -bound, bound, size=(layer.out_channels, layer.in_channels)
            )
            real[f"{layer.name}.bias"] = np.zeros(layer.out_channels)
        elif layer.kind is LayerKind.BATCH_NORM:
            real[f"{layer.name}.gamma"] = np.ones(layer.out_channels)
            real[f"{layer.name}.beta"] = np.zeros(layer.out_channels)
            bn_stats[f"{layer.name}.mean"] = np.zeros(layer.out_channels)
            bn_stats[f"{layer.name}.var"] = np.ones(layer.out_channels)

    state = TrainState(params=params, alphas={}, real=real, bn_stats=bn_stats, moments={}, lr=lr)
    alphas = {
        layer.name: analytic_alpha(layer_weights(state, layer))
        for layer in arch.binary_layers()
        if layer.scale_mode is ScaleMode.LEARNED
    }
    state.alphas = alphas
    state.moments = init_moments(state.trainable())
    return state


# ============= Weights on demand =============


def layer_weights(state: TrainState, layer: LayerSpec) -> np.ndarray:
    """Real pre-binarization weights of a binary layer, rebuilt from its factors."""
    p = state.params[layer.param_id]
    if isinstance(p, HolisticGroupParam):
        return reconstruct_layer(p, layer.slice_index)
    return reconstruct(p)


@dataclass
class Relaxation:
    """
    Frozen linearization of binarization for finite-difference checks.

    While recording, every sign is replaced by x * 1{|x| <= 1} and the mask
    (plus analytic alpha) is stored; replays reuse the stored values so that a
    perturbation pair sees a smooth, fixed surrogate.
    """

    masks: Dict[str, np.ndarray] = field(default_factory=dict)
    alphas: Dict[str, np.ndarray] = field(default_factory=dict)
    recording: bool = True

    def mask(self, name: str, x: np.ndarray) -> np.ndarray:
        if self.recording:
            self.masks[name] = ste_mask(x)
        return self.masks[name]

    def alpha(self, name: str, w: np.ndarray) -> np.ndarray:
        if self.recording:
            self.alphas[name] = analytic_alpha(w)
        return self.alphas[name]


@dataclass
class MaterializedWeight:
    pre: np.ndarray  # real reconstruction
    b: np.ndarray  # sign(pre), or its relaxation
    alpha: np.ndarray
    mask: np.ndarray  # STE mask of pre

    def effective(self) -> np.ndarray:
        return self.alpha[:, None, None, None] * self.b


def materialize_weights(
    state: TrainState, arch: Architecture, relax: Optional[Relaxation] = None
) -> Dict[str, MaterializedWeight]:
    """Reconstruct, binarize and scale every binary layer for one pass."""
    weights = {}
    for layer in arch.binary_layers():
        pre = layer_weights(state, layer)
        if relax is None:
            mask = ste_mask(pre)
            b = sign_binarize(pre)
            alpha = state.alphas[layer.name] if layer.scale_mode is ScaleMode.LEARNED else analytic_alpha(pre)
        else:
            mask = relax.mask(f"{layer.name}.weight", pre)
            b = pre * mask
            if layer.scale_mode is ScaleMode.LEARNED:
                alpha = state.alphas[layer.name]
            else:
                alpha = relax.alpha(layer.name, pre)
        weights[layer.name] = MaterializedWeight(pre=pre, b=b, alpha=alpha, mask=mask)
    return weights


# ============= Forward =============


@dataclass
class ForwardContext:
    state: TrainState
    weights: Dict[str, MaterializedWeight]
    training: bool
    bn_momentum: float = 0.1
    relax: Optional[Relaxation] = None
    new_bn_stats: Dict[str, np.ndarray] = field(default_factory=dict)


@dataclass
class BlockCache:
    input_shape: Tuple[int, ...]
    caches: List[object]


def _forward_layer(x: np.ndarray, layer: LayerSpec, block_input: np.ndarray, ctx: ForwardContext):
    kind = layer.kind
    if kind in (LayerKind.REAL_CONV, LayerKind.BINARY_CONV):
        require(
            x.ndim == 4 and x.shape[1] == layer.in_channels,
            f"{layer.name}: expected {layer.in_channels} input channels, got shape {x.shape}",
        )
        if kind is LayerKind.REAL_CONV:
            return conv_forward(x, ctx.state.real[f"{layer.name}.weight"], layer.stride, layer.padding)
        w = ctx.weights[layer.name]
        return conv_forward(x, w.effective(), layer.stride, layer.padding, BINARY_PAD_VALUE)
    if kind is LayerKind.BATCH_NORM:
        require(x.shape[1] == layer.in_channels, f"{layer.name}: channel mismatch {x.shape}")
        out, cache, mean, var = batch_norm_forward(
            x,
            ctx.state.real[f"{layer.name}.gamma"],
            ctx.state.real[f"{layer.name}.beta"],
            ctx.state.bn_stats[f"{layer.name}.mean"],
            ctx.state.bn_stats[f"{layer.name}.var"],
            ctx.training,
            ctx.bn_momentum,
        )
        ctx.new_bn_stats[f"{layer.name}.mean"] = mean
        ctx.new_bn_stats[f"{layer.name}.var"] = var
        return out, cache
    if kind is LayerKind.SIGN_ACTIVATION:
        if ctx.relax is None:
            return binarize_activations(x), ste_mask(x)
        mask = ctx.relax.mask(layer.name, x)
        return x * mask, mask
    if kind is LayerKind.RESIDUAL_ADD:
        shortcut = shortcut_forward(block_input, layer.out_channels, layer.stride)
        require(shortcut.shape == x.shape, f"{layer.name}: branch {x.shape} vs shortcut {shortcut.shape}")
        return x + shortcut, None
    if kind is LayerKind.AVG_POOL:
        return avg_pool_forward(x, layer.kernel), x.shape
    if kind is LayerKind.FULLY_CONNECTED:
        x2 = x.reshape(x.shape[0], -1)
        return fc_forward(x2, ctx.state.real[f"{layer.name}.weight"], ctx.state.real[f"{layer.name}.bias"]), x2
    raise ValueError(f"unknown layer kind {kind}")


def forward_block(
    x: np.ndarray, block: Sequence[LayerSpec], ctx: ForwardContext
) -> Tuple[np.ndarray, BlockCache]:
    """Run one block; caches everything the backward pass needs (including STE masks)."""
    block_input = x
    caches = []
    for layer in block:
        x, cache = _forward_layer(x, layer, block_input, ctx)
        caches.append(cache)
    return x, BlockCache(block_input.shape, caches)


def forward(
    arch: Architecture, x: np.ndarray, ctx: ForwardContext
) -> Tuple[np.ndarray, List[BlockCache]]:
    require(
        tuple(x.shape[1:]) == tuple(arch.input_shape),
        f"input shape {x.shape[1:]} does not match network input {arch.input_shape}",
    )
    tape = []
    for block in arch.blocks:
        x, cache = forward_block(x, block, ctx)
        tape.append(cache)
    return x, tape


# ============= Backward =============


def _backward_layer(dy, layer: LayerSpec, cache, ctx: ForwardContext, grads: Dict[str, np.ndarray]):
    kind = layer.kind
    if kind is LayerKind.REAL_CONV:
        dx, dw = conv_backward(dy, cache)
        grads[f"{REAL_PREFIX}{layer.name}.weight"] = dw
        return dx
    if kind is LayerKind.BINARY_CONV:
        dx, dw_eff = conv_backward(dy, cache)
        w = ctx.weights[layer.name]
        if layer.scale_mode is ScaleMode.LEARNED:
            grads[f"{ALPHA_PREFIX}{layer.name}"] = alpha_gradient(dw_eff, w.b)
        # analytic alpha is held constant; the gradient reaches W through the STE only
        grads[f"wgrad/{layer.name}"] = dw_eff * w.alpha[:, None, None, None] * w.mask
        return dx
    if kind is LayerKind.BATCH_NORM:
        dx, dgamma, dbeta = batch_norm_backward(dy, cache)
        grads[f"{REAL_PREFIX}{layer.name}.gamma"] = dgamma
        grads[f"{REAL_PREFIX}{layer.name}.beta"] = dbeta
        return dx
    if kind is LayerKind.SIGN_ACTIVATION:
        return np.where(cache, dy, 0.0)
    if kind is LayerKind.AVG_POOL:
        return avg_pool_backward(dy, cache, layer.kernel)
    if kind is LayerKind.FULLY_CONNECTED:
        w = ctx.state.real[f"{layer.name}.weight"]
        dx, dw, db = fc_backward(dy, cache, w)
        grads[f"{REAL_PREFIX}{layer.name}.weight"] = dw
        grads[f"{REAL_PREFIX}{layer.name}.bias"] = db
        return dx
    raise ValueError(f"unknown layer kind {kind}")


def backward_block(
    dy: np.ndarray,
    block: Sequence[LayerSpec],
    cache: BlockCache,
    ctx: ForwardContext,
    grads: Dict[str, np.ndarray],
) -> np.ndarray:
    """Reverse of forward_block; returns the gradient w.r.t. the block input."""
    d_shortcut = None
    for layer, layer_cache in reversed(list(zip(block, cache.caches))):
        if layer.kind is LayerKind.RESIDUAL_ADD:
            d_shortcut = shortcut_backward(dy, cache.input_shape, layer.stride)
            continue
        dy = _backward_layer(dy, layer, layer_cache, ctx, grads)
    if d_shortcut is not None:
        dy = dy + d_shortcut
    return dy.reshape(cache.input_shape)


def backward(
    arch: Architecture,
    tape: List[BlockCache],
    dlogits: np.ndarray,
    ctx: ForwardContext,
) -> Dict[str, np.ndarray]:
    """
    Gradients of every trainable array under its flat TrainState name.

    Per-layer weight gradients are folded back into the latent factors of the
    parametrization they come from.
    """
    grads: Dict[str, np.ndarray] = {}
    dy = dlogits
    for block, cache in zip(reversed(arch.blocks), reversed(tape)):
        dy = backward_block(dy, block, cache, ctx, grads)

    state = ctx.state
    for pid, spec in arch.param_specs.items():
        p = state.params[pid]
        if isinstance(p, HolisticGroupParam):
            grad_w = np.stack([grads.pop(f"wgrad/{layer_id}") for layer_id in spec.layer_ids])
        else:
            grad_w = grads.pop(f"wgrad/{spec.layer_ids[0]}")
        for name, g in backward_to_factors(p, grad_w).items():
            grads[f"{PARAM_PREFIX}{pid}/{name}"] = g
    return grads
