"""Differentiable kernels built on top of Tensor.

This module provides:
- conv2d: cross-correlation with padding and stride (im2col)
- norm2d: per-channel normalization with running statistics
- softmax, relu, sigmoid, log: pointwise and axis-wise activations
- bilinear_interpolate: align-corners-false resize of C×h×w maps
- avg_pool2d: k×k mean pooling used for downsampling
- scatter_add: sum-pool columns into cells (splat accumulation)

All inputs are single samples laid out channel-first (C×H×W).
"""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from diffbev.core.errors import ShapeError
from diffbev.core.tensor import (
    Array,
    Tensor,
    add,
    add_macs,
    concat,
    make_result,
    reduce_mean,
    reduce_sum,
    reshape,
    transpose,
)

__all__ = [
    "avg_pool2d",
    "bilinear_interpolate",
    "concat",
    "conv2d",
    "interpolation_matrix",
    "log",
    "norm2d",
    "reduce_mean",
    "reduce_sum",
    "relu",
    "reshape",
    "scatter_add",
    "sigmoid",
    "softmax",
    "transpose",
]

NORM_MOMENTUM = 0.1
NORM_EPS = 1e-5


def conv2d(x: Tensor, w: Tensor, bias: Tensor | None = None, stride: int = 1, padding: int = 0) -> Tensor:
    """2-D cross-correlation of a C_in×H×W map with C_out×C_in×k×k weights.

    Args:
        x: Input map.
        w: Weights, k odd.
        bias: Optional per-output-channel bias of shape (C_out,).
        stride: Step between windows.
        padding: Zero padding on every side.

    Returns:
        C_out×H'×W' map with H' = (H + 2·padding − k)/stride + 1.

    Raises:
        ShapeError: On rank/channel mismatch, even kernel, negative padding
            or a non-integer output size.
    """
    if x.ndim != 3 or w.ndim != 4:
        raise ShapeError(f"conv2d needs a C×H×W input and a 4-D kernel, got {x.shape} and {w.shape}")
    c_out, c_in, kh, kw = w.shape
    if c_in != x.shape[0]:
        raise ShapeError(f"conv2d channel mismatch: input {x.shape} vs kernel {w.shape}")
    if kh != kw or kh % 2 == 0:
        raise ShapeError(f"conv2d needs a square odd kernel, got {w.shape}")
    if padding < 0 or stride < 1:
        raise ShapeError(f"conv2d needs padding >= 0 and stride >= 1, got padding={padding} stride={stride}")

    k = kh
    _, h, wd = x.shape
    span_h, span_w = h + 2 * padding - k, wd + 2 * padding - k
    if span_h < 0 or span_w < 0 or span_h % stride or span_w % stride:
        raise ShapeError(f"conv2d output size is not an integer for input {x.shape}, k={k}, stride={stride}, padding={padding}")
    out_h, out_w = span_h // stride + 1, span_w // stride + 1

    xp = np.pad(x.data, ((0, 0), (padding, padding), (padding, padding))) if padding else x.data
    windows = sliding_window_view(xp, (k, k), axis=(1, 2))[:, ::stride, ::stride]
    cols = windows.transpose(1, 2, 0, 3, 4).reshape(out_h * out_w, c_in * k * k)
    w2 = w.data.reshape(c_out, c_in * k * k)
    data = (w2 @ cols.T).reshape(c_out, out_h, out_w)
    add_macs(c_out * c_in * k * k * out_h * out_w)
    padded_shape = xp.shape

    def backward(g: Array) -> tuple[Array | None, Array | None]:
        g2 = g.reshape(c_out, out_h * out_w)
        gw = (g2 @ cols).reshape(w.shape) if w.requires_grad else None
        gx = None
        if x.requires_grad:
            gcols = (w2.T @ g2).reshape(c_in, k, k, out_h, out_w)
            gxp = np.zeros(padded_shape, dtype=g.dtype)
            for i in range(k):
                for j in range(k):
                    gxp[:, i : i + stride * (out_h - 1) + 1 : stride, j : j + stride * (out_w - 1) + 1 : stride] += gcols[:, i, j]
            gx = gxp[:, padding : padding + h, padding : padding + wd]
        return gx, gw

    out = make_result(data, (x, w), backward)
    if bias is not None:
        out = add(out, reshape(bias, (c_out, 1, 1)))
    return out


def norm2d(
    x: Tensor,
    scale: Tensor,
    shift: Tensor,
    running_mean: Tensor | None,
    running_var: Tensor | None,
    training: bool,
    momentum: float = NORM_MOMENTUM,
    eps: float = NORM_EPS,
) -> Tensor:
    """Normalize each channel over its spatial positions.

    In training mode batch statistics are used and the running buffers are
    replaced with their momentum-updated values; in eval mode the running
    statistics are used as constants. Without running buffers the input's
    own statistics are used in both modes.
    """
    if x.ndim != 3 or scale.shape != (x.shape[0],):
        raise ShapeError(f"norm2d expects C×H×W input with C scales, got {x.shape} and {scale.shape}")
    n = x.shape[1] * x.shape[2]
    batch_stats = running_mean is None or running_var is None or training
    if running_mean is None or running_var is None or training:
        mean = x.data.mean(axis=(1, 2))
        var = x.data.var(axis=(1, 2))
        if training and running_mean is not None and running_var is not None:
            running_mean.data = ((1.0 - momentum) * running_mean.data + momentum * mean).astype(running_mean.dtype)
            running_var.data = ((1.0 - momentum) * running_var.data + momentum * var).astype(running_var.dtype)
    else:
        mean = running_mean.data.astype(x.dtype)
        var = running_var.data.astype(x.dtype)
    inv_std = (1.0 / np.sqrt(var + eps))[:, None, None]
    xhat = (x.data - mean[:, None, None]) * inv_std
    gamma = scale.data[:, None, None]
    data = gamma * xhat + shift.data[:, None, None]

    def backward(g: Array) -> tuple[Array | None, Array | None, Array | None]:
        gx = None
        if x.requires_grad:
            gxhat = g * gamma
            if batch_stats:
                gsum = gxhat.sum(axis=(1, 2), keepdims=True)
                gx = inv_std / n * (n * gxhat - gsum - xhat * (gxhat * xhat).sum(axis=(1, 2), keepdims=True))
            else:
                gx = gxhat * inv_std
        gscale = (g * xhat).sum(axis=(1, 2)) if scale.requires_grad else None
        gshift = g.sum(axis=(1, 2)) if shift.requires_grad else None
        return gx, gscale, gshift

    return make_result(data, (x, scale, shift), backward)


def softmax(x: Tensor, axis: int = -1) -> Tensor:
    """Softmax along axis, computed with max-subtraction."""
    if not -x.ndim <= axis < x.ndim:
        raise ShapeError(f"softmax axis {axis} invalid for shape {x.shape}")
    shifted = x.data - x.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    y = e / e.sum(axis=axis, keepdims=True)

    def backward(g: Array) -> tuple[Array]:
        return (y * (g - (g * y).sum(axis=axis, keepdims=True)),)

    return make_result(y, (x,), backward)


def relu(x: Tensor) -> Tensor:
    mask = x.data > 0

    def backward(g: Array) -> tuple[Array]:
        return (g * mask,)

    return make_result(x.data * mask, (x,), backward)


def sigmoid(x: Tensor) -> Tensor:
    # tanh form stays finite for large |x|
    y = 0.5 * (1.0 + np.tanh(0.5 * x.data))

    def backward(g: Array) -> tuple[Array]:
        return (g * y * (1.0 - y),)

    return make_result(y, (x,), backward)


def log(x: Tensor, floor: float | None = None) -> Tensor:
    """Natural log, optionally clamping the argument from below.

    Entries at or below the floor get zero gradient.
    """
    if floor is None:
        arg = x.data
        live = np.ones(x.shape, dtype=bool)
    else:
        live = x.data > floor
        arg = np.where(live, x.data, floor).astype(x.dtype)
    data = np.log(arg)

    def backward(g: Array) -> tuple[Array]:
        return (np.where(live, g / arg, 0.0).astype(g.dtype),)

    return make_result(data, (x,), backward)


def interpolation_matrix(n_out: int, n_in: int) -> Array:
    """Row-stochastic 1-D linear interpolation matrix (align_corners=False)."""
    mat = np.zeros((n_out, n_in), dtype=np.float64)
    src = (np.arange(n_out) + 0.5) * (n_in / n_out) - 0.5
    src = np.clip(src, 0.0, n_in - 1)
    lo = np.floor(src).astype(np.int64)
    hi = np.minimum(lo + 1, n_in - 1)
    frac = src - lo
    rows = np.arange(n_out)
    np.add.at(mat, (rows, lo), 1.0 - frac)
    np.add.at(mat, (rows, hi), frac)
    return mat


def bilinear_interpolate(x: Tensor, size: tuple[int, int]) -> Tensor:
    """Resize a C×h×w map to C×H×W with separable linear interpolation.

    Raises:
        ShapeError: If the target size has a zero dimension.
    """
    out_h, out_w = size
    if out_h <= 0 or out_w <= 0:
        raise ShapeError(f"cannot interpolate {x.shape} to zero-size target {size}")
    if x.ndim != 3:
        raise ShapeError(f"bilinear_interpolate expects C×h×w, got {x.shape}")
    ry = interpolation_matrix(out_h, x.shape[1]).astype(x.dtype)
    rx = interpolation_matrix(out_w, x.shape[2]).astype(x.dtype)
    data = np.einsum("ij,cjk,lk->cil", ry, x.data, rx)

    def backward(g: Array) -> tuple[Array]:
        return (np.einsum("ij,cil,lk->cjk", ry, g, rx),)

    return make_result(data, (x,), backward)


def avg_pool2d(x: Tensor, k: int = 2) -> Tensor:
    """Non-overlapping k×k mean pooling.

    Raises:
        ShapeError: If the spatial size is not divisible by k.
    """
    c, h, w = x.shape
    if h % k or w % k:
        raise ShapeError(f"avg_pool2d: spatial size of {x.shape} not divisible by {k}")
    data = x.data.reshape(c, h // k, k, w // k, k).mean(axis=(2, 4))

    def backward(g: Array) -> tuple[Array]:
        return (np.repeat(np.repeat(g, k, axis=1), k, axis=2) / (k * k),)

    return make_result(data, (x,), backward)


def scatter_add(values: Tensor, index: Array, n_cells: int) -> Tensor:
    """Sum the columns of a C×N tensor into n_cells buckets.

    Columns whose index is negative are dropped. Accumulation runs in
    stable cell order, so the result does not depend on thread timing.

    Args:
        values: C×N contributions.
        index: Length-N integer bucket ids, -1 to drop.
        n_cells: Number of output buckets.

    Returns:
        C×n_cells tensor of bucket sums.
    """
    index = np.asarray(index, dtype=np.int64)
    if values.ndim != 2 or index.shape != (values.shape[1],):
        raise ShapeError(f"scatter_add needs C×N values and N indices, got {values.shape} and {index.shape}")
    keep = np.flatnonzero(index >= 0)
    keep = keep[np.argsort(index[keep], kind="stable")]
    cells = index[keep]
    data = np.zeros((values.shape[0], n_cells), dtype=values.dtype)
    np.add.at(data, (slice(None), cells), values.data[:, keep])

    def backward(g: Array) -> tuple[Array]:
        grad = np.zeros(values.shape, dtype=g.dtype)
        grad[:, keep] = g[:, cells]
        return (grad,)

    return make_result(data, (values,), backward)


def flatten_tokens(x: Tensor) -> Tensor:
    """C×H×W map to an (H·W)×C token matrix."""
    c, h, w = x.shape
    return transpose(reshape(x, (c, h * w)))


def unflatten_tokens(tokens: Tensor, height: int, width: int) -> Tensor:
    """(H·W)×C token matrix back to a C×H×W map."""
    return reshape(transpose(tokens), (tokens.shape[1], height, width))


def mean_squared(x: Tensor) -> Tensor:
    return reduce_mean(x * x)


def sum_squared(x: Tensor) -> Tensor:
    return reduce_sum(x * x)
