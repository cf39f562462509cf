"""
Differentiable primitives built on ``Tensor.from_op``.

Everything the spiking stacks and memory blocks need beyond elementwise
arithmetic lives here: stable softmax family, cross-entropy, dense and
convolutional layers, max-pooling and tensor joins.
"""

from __future__ import annotations

from typing import Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy.special import logsumexp as _scipy_logsumexp

from src.kernel.tensor import Tensor, check_finite, matmul
from src.utils.errors import ShapeError


def softmax(x: Tensor, axis: int = -1) -> Tensor:
    shifted = x.data - x.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    s = e / e.sum(axis=axis, keepdims=True)
    check_finite(s, "softmax")

    def backward(g):
        return (s * (g - (g * s).sum(axis=axis, keepdims=True)),)

    return Tensor.from_op(s, (x,), backward, "softmax")


def log_softmax(x: Tensor, axis: int = -1) -> Tensor:
    shifted = x.data - x.data.max(axis=axis, keepdims=True)
    out = shifted - np.log(np.exp(shifted).sum(axis=axis, keepdims=True))

    def backward(g):
        return (g - np.exp(out) * g.sum(axis=axis, keepdims=True),)

    return Tensor.from_op(out, (x,), backward, "log_softmax")


def logsumexp(x: Tensor, axis: int = -1, mask: np.ndarray | None = None) -> Tensor:
    """
    log Σ exp(x) along ``axis``, optionally restricted to entries where ``mask`` is true.

    A fully masked row yields -inf and passes no gradient.
    """
    weights = None if mask is None else np.asarray(mask, dtype=x.data.dtype)
    with np.errstate(divide="ignore"):
        out = _scipy_logsumexp(x.data, axis=axis, b=weights)
    out = np.asarray(out, dtype=x.data.dtype)
    anchor = np.expand_dims(np.where(np.isfinite(out), out, 0.0), axis)

    def backward(g):
        w = np.exp(x.data - anchor)
        if weights is not None:
            w = np.where(weights > 0, w, 0.0)
        g = np.where(np.isfinite(out), g, 0.0)
        return (w * np.expand_dims(g, axis),)

    return Tensor.from_op(out, (x,), backward, "logsumexp")


def cross_entropy(logits: Tensor, labels: np.ndarray) -> Tensor:
    """Mean negative log-likelihood of integer ``labels`` under ``softmax(logits)``."""
    labels = np.asarray(labels, dtype=np.int64)
    if logits.ndim != 2 or labels.shape != (logits.shape[0],):
        raise ShapeError(f"cross_entropy: logits {logits.shape} vs labels {labels.shape}")
    picked = log_softmax(logits, axis=1)[np.arange(len(labels)), labels]
    return -picked.mean()


def linear(x: Tensor, weight: Tensor, bias: Tensor | None = None) -> Tensor:
    """Affine map ``x @ weight + bias`` with weight stored as (in, out)."""
    if x.shape[-1] != weight.shape[0]:
        raise ShapeError(f"linear: input width {x.shape[-1]} != weight rows {weight.shape[0]}")
    lead = x.shape[:-1]
    flat = x if x.ndim == 2 else x.reshape(-1, x.shape[-1])
    out = matmul(flat, weight)
    if bias is not None:
        out = out + bias
    return out if x.ndim == 2 else out.reshape(*lead, weight.shape[1])


def conv2d(
    x: Tensor,
    kernel: Tensor,
    bias: Tensor | None = None,
    stride: int = 1,
    padding: int = 0,
) -> Tensor:
    """
    2-D cross-correlation (no kernel flip).

    Args:
        x (Tensor): Input of shape (N, C_in, H, W) or (C_in, H, W).
        kernel (Tensor): Weights of shape (C_out, C_in, kh, kw).
        bias (Tensor | None): Optional (C_out,) bias.
        stride (int): Step between windows.
        padding (int): Zero padding on every spatial border.

    Returns:
        Tensor: (N, C_out, H', W'), or (C_out, H', W') for unbatched input.
    """
    unbatched = x.ndim == 3
    if unbatched:
        x = x.reshape(1, *x.shape)
    if x.ndim != 4 or kernel.ndim != 4:
        raise ShapeError(f"conv2d: expected 4-D input and kernel, got {x.shape} and {kernel.shape}")
    n, c_in, h, w = x.shape
    c_out, k_in, kh, kw = kernel.shape
    if k_in != c_in:
        raise ShapeError(f"conv2d: kernel expects {k_in} channels, input has {c_in}")
    span_h, span_w = h + 2 * padding - kh, w + 2 * padding - kw
    if span_h < 0 or span_w < 0 or span_h % stride or span_w % stride:
        raise ShapeError(
            f"conv2d: non-integral output for input {h}x{w}, kernel {kh}x{kw}, "
            f"stride {stride}, padding {padding}"
        )
    ho, wo = span_h // stride + 1, span_w // stride + 1

    pad = ((0, 0), (0, 0), (padding, padding), (padding, padding))
    xp = np.pad(x.data, pad) if padding else x.data
    windows = sliding_window_view(xp, (kh, kw), axis=(2, 3))[:, :, ::stride, ::stride]
    out = np.tensordot(windows, kernel.data, axes=([1, 4, 5], [1, 2, 3])).transpose(0, 3, 1, 2)
    if bias is not None:
        out = out + bias.data.reshape(1, -1, 1, 1)
    out = np.ascontiguousarray(out)

    def backward(g):
        g_kernel = np.tensordot(g, windows, axes=([0, 2, 3], [0, 2, 3]))
        g_xp = np.zeros_like(xp)
        for i in range(kh):
            for j in range(kw):
                g_xp[:, :, i : i + stride * ho : stride, j : j + stride * wo : stride] += np.einsum(
                    "nohw,oc->nchw", g, kernel.data[:, :, i, j]
                )
        g_x = g_xp[:, :, padding : padding + h, padding : padding + w] if padding else g_xp
        grads = [g_x, g_kernel]
        if bias is not None:
            grads.append(g.sum(axis=(0, 2, 3)))
        return grads

    parents = (x, kernel) if bias is None else (x, kernel, bias)
    result = Tensor.from_op(out, parents, backward, "conv2d")
    return result.reshape(c_out, ho, wo) if unbatched else result


def max_pool2d(x: Tensor, size: int = 2) -> Tensor:
    """Non-overlapping max-pool over the last two axes; ragged borders are cropped."""
    *lead, h, w = x.shape
    h2, w2 = h // size, w // size
    if h2 == 0 or w2 == 0:
        raise ShapeError(f"max_pool2d: input {h}x{w} smaller than window {size}")
    cropped = x.data[..., : h2 * size, : w2 * size]
    blocks = cropped.reshape(*lead, h2, size, w2, size)
    k = len(lead)
    order = (*range(k), k, k + 2, k + 1, k + 3)
    flat = blocks.transpose(order).reshape(*lead, h2, w2, size * size)
    idx = flat.argmax(axis=-1)[..., None]
    out = np.take_along_axis(flat, idx, axis=-1)[..., 0]

    def backward(g):
        g_flat = np.zeros_like(flat)
        np.put_along_axis(g_flat, idx, g[..., None], axis=-1)
        g_blocks = g_flat.reshape(*lead, h2, w2, size, size).transpose(np.argsort(order))
        g_x = np.zeros(x.shape, dtype=x.data.dtype)
        g_x[..., : h2 * size, : w2 * size] = g_blocks.reshape(*lead, h2 * size, w2 * size)
        return (g_x,)

    return Tensor.from_op(out, (x,), backward, "max_pool2d")


def concat(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    sizes = [t.shape[axis] for t in tensors]
    cuts = np.cumsum(sizes)[:-1]
    out = np.concatenate([t.data for t in tensors], axis=axis)
    return Tensor.from_op(out, tuple(tensors), lambda g: np.split(g, cuts, axis=axis), "concat")


def stack(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    out = np.stack([t.data for t in tensors], axis=axis)

    def backward(g):
        moved = np.moveaxis(g, axis, 0)
        return [moved[i] for i in range(len(tensors))]

    return Tensor.from_op(out, tuple(tensors), backward, "stack")


def l2_normalize(x: Tensor, axis: int = -1, eps: float = 1e-12) -> Tensor:
    return x * ((x * x).sum(axis=axis, keepdims=True) + eps * eps) ** -0.5
