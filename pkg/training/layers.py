"""
Layer primitives with hand-written backward passes.

All tensors are NCHW float64 numpy arrays. Each *_forward returns the output and
a cache; the matching *_backward consumes the cache.
"""

from dataclasses import dataclass
from typing import Tuple

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy.special import log_softmax, softmax

from core.errors import require

BN_EPS = 1e-5


# ============= Convolution =============


def conv_output_size(size: int, kernel: int, stride: int, padding: int) -> int:
    return (size + 2 * padding - kernel) // stride + 1


def im2col(x: np.ndarray, kernel: int, stride: int, padding: int, pad_value: float = 0.0) -> np.ndarray:
    """
    Receptive fields of `x` as rows.

    Returns:
        Array (N, Ho, Wo, C*kernel*kernel); row entries ordered (c, i, j) like a
        flattened (C, k, k) filter.
    """
    require(x.ndim == 4, f"expected NCHW input, got shape {x.shape}")
    if padding:
        x = np.pad(
            x,
            ((0, 0), (0, 0), (padding, padding), (padding, padding)),
            constant_values=pad_value,
        )
    require(
        x.shape[2] >= kernel and x.shape[3] >= kernel,
        f"kernel {kernel} larger than padded input {x.shape[2:]}",
    )
    windows = sliding_window_view(x, (kernel, kernel), axis=(2, 3))[:, :, ::stride, ::stride]
    n, c, ho, wo = windows.shape[:4]
    return windows.transpose(0, 2, 3, 1, 4, 5).reshape(n, ho, wo, c * kernel * kernel)


@dataclass
class ConvCache:
    cols: np.ndarray
    w: np.ndarray
    x_shape: Tuple[int, ...]
    stride: int
    padding: int


def conv_forward(
    x: np.ndarray, w: np.ndarray, stride: int = 1, padding: int = 0, pad_value: float = 0.0
) -> Tuple[np.ndarray, ConvCache]:
    """Cross-correlation of x (N, C, H, W) with w (O, C, k, k)."""
    require(w.ndim == 4 and w.shape[2] == w.shape[3], f"expected square kernels, got {w.shape}")
    require(x.ndim == 4 and x.shape[1] == w.shape[1], f"input {x.shape} does not match weight {w.shape}")
    require(stride >= 1 and padding >= 0, f"invalid stride {stride} / padding {padding}")
    cols = im2col(x, w.shape[2], stride, padding, pad_value)
    out = cols @ w.reshape(w.shape[0], -1).T
    return out.transpose(0, 3, 1, 2), ConvCache(cols, w, x.shape, stride, padding)


def conv_backward(dout: np.ndarray, cache: ConvCache) -> Tuple[np.ndarray, np.ndarray]:
    """Returns (dx, dw). Padded positions receive no gradient."""
    w, stride, padding = cache.w, cache.stride, cache.padding
    o, c, k, _ = w.shape
    n, _, h, wd = cache.x_shape
    dmat = dout.transpose(0, 2, 3, 1)  # N, Ho, Wo, O
    ho, wo = dmat.shape[1], dmat.shape[2]
    dw = np.tensordot(dmat, cache.cols, axes=([0, 1, 2], [0, 1, 2])).reshape(w.shape)
    dcols = (dmat @ w.reshape(o, -1)).reshape(n, ho, wo, c, k, k)
    dxp = np.zeros((n, c, h + 2 * padding, wd + 2 * padding))
    for i in range(k):
        for j in range(k):
            dxp[:, :, i : i + stride * ho : stride, j : j + stride * wo : stride] += dcols[
                :, :, :, :, i, j
            ].transpose(0, 3, 1, 2)
    dx = dxp[:, :, padding : padding + h, padding : padding + wd]
    return np.ascontiguousarray(dx), dw


# ============= Batch normalization =============


@dataclass
class BatchNormCache:
    x_hat: np.ndarray
    inv_std: np.ndarray
    gamma: np.ndarray


def _channel_view(v: np.ndarray, ndim: int) -> np.ndarray:
    return v.reshape((1, -1) + (1,) * (ndim - 2))


def batch_norm_forward(
    x: np.ndarray,
    gamma: np.ndarray,
    beta: np.ndarray,
    running_mean: np.ndarray,
    running_var: np.ndarray,
    training: bool,
    momentum: float = 0.1,
) -> Tuple[np.ndarray, BatchNormCache, np.ndarray, np.ndarray]:
    """
    Per-channel batch normalization over every axis except 1.

    Returns:
        (out, cache, new running mean, new running var). Running statistics are
        returned, never modified in place; in eval mode they come back unchanged.
    """
    require(
        x.ndim >= 2 and x.shape[1] == gamma.shape[0],
        f"input {x.shape} does not match {gamma.shape[0]} channels",
    )
    axes = (0,) + tuple(range(2, x.ndim))
    if training:
        mean = x.mean(axis=axes)
        var = x.var(axis=axes)
        new_mean = (1.0 - momentum) * running_mean + momentum * mean
        new_var = (1.0 - momentum) * running_var + momentum * var
    else:
        mean, var = running_mean, running_var
        new_mean, new_var = running_mean, running_var
    inv_std = 1.0 / np.sqrt(var + BN_EPS)
    x_hat = (x - _channel_view(mean, x.ndim)) * _channel_view(inv_std, x.ndim)
    out = _channel_view(gamma, x.ndim) * x_hat + _channel_view(beta, x.ndim)
    return out, BatchNormCache(x_hat, inv_std, gamma), new_mean, new_var


def batch_norm_backward(
    dout: np.ndarray, cache: BatchNormCache
) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Training-mode backward. Returns (dx, dgamma, dbeta)."""
    ndim = dout.ndim
    axes = (0,) + tuple(range(2, ndim))
    m = dout.size // dout.shape[1]
    dbeta = dout.sum(axis=axes)
    dgamma = (dout * cache.x_hat).sum(axis=axes)
    dx_hat = dout * _channel_view(cache.gamma, ndim)
    dx = (
        _channel_view(cache.inv_std / m, ndim)
        * (
            m * dx_hat
            - _channel_view(dx_hat.sum(axis=axes), ndim)
            - cache.x_hat * _channel_view((dx_hat * cache.x_hat).sum(axis=axes), ndim)
        )
    )
    return dx, dgamma, dbeta


# ============= Pooling / shortcut / dense =============


def avg_pool_forward(x: np.ndarray, size: int) -> np.ndarray:
    """size == 0 pools globally to (N, C); otherwise non-overlapping size x size windows."""
    if size == 0:
        return x.mean(axis=(2, 3))
    n, c, h, w = x.shape
    require(h % size == 0 and w % size == 0, f"pool size {size} does not divide {h}x{w}")
    return x.reshape(n, c, h // size, size, w // size, size).mean(axis=(3, 5))


def avg_pool_backward(dout: np.ndarray, x_shape: Tuple[int, ...], size: int) -> np.ndarray:
    n, c, h, w = x_shape
    if size == 0:
        return np.broadcast_to(dout[:, :, None, None] / (h * w), x_shape).copy()
    grad = np.repeat(np.repeat(dout, size, axis=2), size, axis=3)
    return grad / (size * size)


def shortcut_forward(x: np.ndarray, out_channels: int, stride: int) -> np.ndarray:
    """Identity path of a residual block: average-pool by `stride`, zero-pad channels."""
    if stride > 1:
        x = avg_pool_forward(x, stride)
    extra = out_channels - x.shape[1]
    require(extra >= 0, f"cannot shrink {x.shape[1]} channels to {out_channels}")
    if extra:
        x = np.pad(x, ((0, 0), (0, extra), (0, 0), (0, 0)))
    return x


def shortcut_backward(
    dout: np.ndarray, x_shape: Tuple[int, ...], stride: int
) -> np.ndarray:
    grad = dout[:, : x_shape[1]]
    if stride > 1:
        grad = avg_pool_backward(grad, x_shape, stride)
    return grad


def fc_forward(x: np.ndarray, w: np.ndarray, b: np.ndarray) -> np.ndarray:
    require(x.ndim == 2 and x.shape[1] == w.shape[1], f"input {x.shape} does not match weight {w.shape}")
    return x @ w.T + b


def fc_backward(
    dout: np.ndarray, x: np.ndarray, w: np.ndarray
) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Returns (dx, dw, db)."""
    return dout @ w, dout.T @ x, dout.sum(axis=0)


# ============= Loss =============


def loss_cross_entropy(logits: np.ndarray, labels: np.ndarray) -> Tuple[float, np.ndarray]:
    """
    Mean softmax cross-entropy.

    Returns:
        (loss, dloss/dlogits) with gradient (softmax - onehot) / batch
    """
    require(logits.ndim == 2, f"expected (batch, classes) logits, got {logits.shape}")
    labels = np.asarray(labels)
    n, k = logits.shape
    require(labels.shape == (n,), f"expected {n} labels, got shape {labels.shape}")
    require(
        bool(np.all((labels >= 0) & (labels < k))),
        f"labels must lie in [0, {k})",
    )
    rows = np.arange(n)
    loss = float(-log_softmax(logits, axis=1)[rows, labels].mean())
    grad = softmax(logits, axis=1)
    grad[rows, labels] -= 1.0
    return loss, grad / n
