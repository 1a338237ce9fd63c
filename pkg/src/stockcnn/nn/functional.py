"""Hand-written forward/backward kernels.

Every activation tensor is a C-ordered float64 ``numpy.ndarray``; the
convolutional part of the network uses the ``[batch, channels, time]``
layout. Each ``*_forward`` returns the output plus whatever its matching
``*_backward`` needs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..rng import Prng

LEAKY_SLOPE = 0.01


def same_padding(length: int, kernel_width: int, stride: int) -> tuple[int, int, int]:
    """Output length and (left, right) zero padding for "same" convolution."""
    out_len = math.ceil(length / stride)
    total = max(0, (out_len - 1) * stride + kernel_width - length)
    left = total // 2
    return out_len, left, total - left


@dataclass
class ConvCache:
    cols: np.ndarray
    weight: np.ndarray
    in_shape: tuple[int, int, int]
    stride: int
    pad_left: int
    padded_len: int


def conv1d_forward(x, weight, bias, stride=1, padding="same"):
    """``out[n, co, t] = b[co] + sum_{ci, j} W[co, ci, j] * xpad[n, ci, t*stride + j]``.

    ``padding`` is ``"same"`` or ``"valid"`` (no padding).
    """
    if x.ndim != 3 or weight.ndim != 3 or x.shape[1] != weight.shape[1]:
        raise ValueError(f"conv1d shape mismatch: x {x.shape}, W {weight.shape}")
    if bias.shape != (weight.shape[0],):
        raise ValueError(f"conv1d bias shape {bias.shape} != ({weight.shape[0]},)")
    n, c_in, length = x.shape
    k = weight.shape[2]
    if padding == "same":
        out_len, left, right = same_padding(length, k, stride)
    elif padding == "valid":
        if length < k:
            raise ValueError(f"valid conv needs length >= kernel width ({length} < {k})")
        out_len, left, right = (length - k) // stride + 1, 0, 0
    else:
        raise ValueError(f"unknown padding {padding!r}")
    xp = np.pad(x, ((0, 0), (0, 0), (left, right))) if left or right else x
    idx = np.arange(out_len)[:, None] * stride + np.arange(k)[None, :]
    cols = xp[:, :, idx]  # [B, Cin, Lout, k]
    out = np.tensordot(cols, weight, axes=([1, 3], [1, 2]))  # [B, Lout, Cout]
    out = np.ascontiguousarray(out.transpose(0, 2, 1)) + bias[None, :, None]
    return out, ConvCache(cols, weight, x.shape, stride, left, xp.shape[2])


def conv1d_backward(cache: ConvCache, d_out):
    """Returns ``(dX, dW, db)``."""
    n, c_in, length = cache.in_shape
    c_out, _, k = cache.weight.shape
    out_len = cache.cols.shape[2]
    if d_out.shape != (n, c_out, out_len):
        raise ValueError(f"conv1d backward: dOut {d_out.shape} does not match cache {(n, c_out, out_len)}")
    db = d_out.sum(axis=(0, 2))
    dw = np.tensordot(d_out, cache.cols, axes=([0, 2], [0, 2]))  # [Cout, Cin, k]
    dcols = np.tensordot(d_out, cache.weight, axes=([1], [0]))  # [B, Lout, Cin, k]
    dxp = np.zeros((n, c_in, cache.padded_len))
    s = cache.stride
    span = s * (out_len - 1) + 1
    for j in range(k):
        dxp[:, :, j:j + span:s] += dcols[:, :, :, j].transpose(0, 2, 1)
    dx = dxp[:, :, cache.pad_left:cache.pad_left + length]
    return np.ascontiguousarray(dx), dw, db


def relu_forward(x):
    return np.maximum(x, 0.0), x


def relu_backward(x, d_out):
    # subgradient 0 at x == 0
    return d_out * (x > 0)


def leaky_relu_forward(x, slope=LEAKY_SLOPE):
    return np.where(x > 0, x, slope * x), x


def leaky_relu_backward(x, d_out, slope=LEAKY_SLOPE):
    # subgradient `slope` at x == 0
    return d_out * np.where(x > 0, 1.0, slope)


@dataclass
class BatchNormCache:
    xhat: np.ndarray
    inv_std: np.ndarray
    gamma: np.ndarray
    train: bool


def batchnorm1d_forward(x, gamma, beta, running_mean, running_var, eps=1e-5, momentum=0.9, train=True):
    """Per-channel normalization over the batch and time axes of ``[B, C, L]``.

    In training mode ``running_mean``/``running_var`` are updated in place as
    ``r = momentum * r + (1 - momentum) * batch_stat`` (biased variance).
    """
    if x.ndim != 3 or x.shape[1] != gamma.shape[0]:
        raise ValueError(f"batchnorm shape mismatch: x {x.shape}, gamma {gamma.shape}")
    if train:
        if x.shape[0] * x.shape[2] < 2:
            raise ValueError("batch norm in training mode needs at least 2 values per channel")
        mean = x.mean(axis=(0, 2))
        var = ((x - mean[None, :, None]) ** 2).mean(axis=(0, 2))
        running_mean *= momentum
        running_mean += (1.0 - momentum) * mean
        running_var *= momentum
        running_var += (1.0 - momentum) * var
    else:
        mean, var = running_mean, running_var
    inv_std = 1.0 / np.sqrt(var + eps)
    xhat = (x - mean[None, :, None]) * inv_std[None, :, None]
    y = gamma[None, :, None] * xhat + beta[None, :, None]
    return y, BatchNormCache(xhat, inv_std, gamma, train)


def batchnorm1d_backward(cache: BatchNormCache, d_out):
    """Returns ``(dX, dGamma, dBeta)``; gradients flow through the batch mean and variance."""
    if not cache.train:
        raise ValueError("batch norm backward requires a training-mode forward cache")
    m = d_out.shape[0] * d_out.shape[2]
    d_beta = d_out.sum(axis=(0, 2))
    d_gamma = (d_out * cache.xhat).sum(axis=(0, 2))
    dxhat = d_out * cache.gamma[None, :, None]
    sum_dxhat = dxhat.sum(axis=(0, 2))[None, :, None]
    sum_dxhat_xhat = (dxhat * cache.xhat).sum(axis=(0, 2))[None, :, None]
    dx = (cache.inv_std[None, :, None] / m) * (m * dxhat - sum_dxhat - cache.xhat * sum_dxhat_xhat)
    return dx, d_gamma, d_beta


def dropout_forward(x, keep_prob, train, prng: Prng | None):
    """Inverted dropout. Returns ``(y, mask)``; mask is ``None`` when nothing is dropped.

    Draws one uniform per element (row-major) and keeps it when ``u < keep_prob``.
    No draws are made in eval mode or when ``keep_prob == 1``.
    """
    if not 0 < keep_prob <= 1:
        raise ValueError(f"keep_prob must be in (0, 1], got {keep_prob}")
    if not train or keep_prob == 1.0:
        return x, None
    mask = (prng.uniform(x.size) < keep_prob).reshape(x.shape).astype(np.float64)
    return x * mask / keep_prob, mask


def dropout_backward(mask, keep_prob, d_out):
    if mask is None:
        return d_out
    return d_out * mask / keep_prob


def dense_forward(x, weight, bias):
    if x.ndim != 2 or x.shape[1] != weight.shape[1] or bias.shape != (weight.shape[0],):
        raise ValueError(f"dense shape mismatch: x {x.shape}, W {weight.shape}, b {bias.shape}")
    return x @ weight.T + bias, x


def dense_backward(x, weight, d_out):
    """Returns ``(dX, dW, db)``."""
    return d_out @ weight, d_out.T @ x, d_out.sum(axis=0)


def softmax(logits):
    f = np.asarray(logits, dtype=np.float64)
    e = np.exp(f - f.max(axis=-1, keepdims=True))
    return e / e.sum(axis=-1, keepdims=True)


def log_softmax(logits):
    f = np.asarray(logits, dtype=np.float64)
    shifted = f - f.max(axis=-1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=-1, keepdims=True))


def cross_entropy_loss(logits, labels, weight_decay=0.0, weights=()):
    """Mean softmax cross-entropy plus ``weight_decay / 2 * sum ||W||^2``.

    Returns ``(loss, dlogits)``. ``dlogits`` covers the data term only; the
    decay gradient ``weight_decay * W`` is added by the caller before the
    optimizer step.
    """
    f = np.asarray(logits, dtype=np.float64)
    y = np.asarray(labels, dtype=np.int64)
    n, k = f.shape
    if y.shape != (n,):
        raise ValueError(f"labels shape {y.shape} does not match logits {f.shape}")
    if np.any(y < 0) or np.any(y >= k):
        raise ValueError(f"labels must lie in [0, {k})")
    logp = log_softmax(f)
    rows = np.arange(n)
    loss = -logp[rows, y].mean()
    if weight_decay:
        loss += 0.5 * weight_decay * sum(float(np.sum(w * w)) for w in weights)
    grad = np.exp(logp)
    grad[rows, y] -= 1.0
    return float(loss), grad / n
