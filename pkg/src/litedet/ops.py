"""Dense NCHW tensor kernels.

Every function here is a pure, stateless map from ndarrays to ndarrays:
identical inputs give bitwise-identical outputs, and nothing is cached
between calls, so the kernels are safe to invoke concurrently.

Conventions:
  * images and feature maps are NCHW,
  * conv2d is direct cross-correlation (no kernel flip), zero padding,
  * maxpool2d ignores padded cells (minus-infinity padding semantics),
  * forward paths run in float32; float64 goes through unchanged for
    high-precision checks.
"""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view


class ShapeError(ValueError):
    """Raised when operand shapes do not satisfy a kernel's contract."""


def _require_4d(x, name):
    x = np.asarray(x)
    if x.ndim != 4:
        raise ShapeError(f"{name} must be 4-D NCHW, got shape {x.shape}")
    return x


def _windows(x, kh, kw, stride):
    """Strided (kh, kw) sliding windows over the last two axes."""
    win = sliding_window_view(x, (kh, kw), axis=(2, 3))
    return win[:, :, ::stride, ::stride]


def conv_output_hw(h, w, kh, kw, stride, pad):
    """Spatial output dims of a cross-correlation / pooling window."""
    ho = (h + 2 * pad - kh) // stride + 1
    wo = (w + 2 * pad - kw) // stride + 1
    return ho, wo


def conv2d(x, weight, bias=None, stride=1, pad=0, groups=1):
    """Grouped 2-D cross-correlation.

    Args:
        x: input, shape (N, Cin, H, W).
        weight: filters, shape (Cout, Cin // groups, kh, kw).
        bias: optional per-output-channel bias, shape (Cout,).
        stride, pad: uniform stride and zero padding.
        groups: channel groups; Cin and Cout must both be divisible.

    Returns:
        (N, Cout, H', W') with H' = floor((H + 2*pad - kh) / stride) + 1.
    """
    x = _require_4d(x, "input")
    weight = _require_4d(weight, "weight")
    n, cin, h, w = x.shape
    cout, cin_g, kh, kw = weight.shape
    if groups < 1:
        raise ShapeError(f"groups must be >= 1, got {groups}")
    if cin % groups:
        raise ShapeError(f"input channels {cin} not divisible by groups {groups}")
    if cout % groups:
        raise ShapeError(f"output channels {cout} not divisible by groups {groups}")
    if cin_g != cin // groups:
        raise ShapeError(
            f"weight expects {cin_g} channels per group, input provides {cin // groups}"
        )
    if h + 2 * pad < kh or w + 2 * pad < kw:
        raise ShapeError(
            f"kernel {kh}x{kw} larger than padded input {h + 2 * pad}x{w + 2 * pad}"
        )
    if bias is not None:
        bias = np.asarray(bias)
        if bias.shape != (cout,):
            raise ShapeError(f"bias shape {bias.shape} != ({cout},)")

    if pad:
        x = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
    win = _windows(x, kh, kw, stride)  # (N, Cin, H', W', kh, kw)
    ho, wo = win.shape[2], win.shape[3]

    if groups == 1:
        cols = win.transpose(0, 2, 3, 1, 4, 5).reshape(n * ho * wo, cin * kh * kw)
        out = cols @ weight.reshape(cout, -1).T
        out = out.reshape(n, ho, wo, cout).transpose(0, 3, 1, 2)
    elif groups == cin and cout == cin:
        # depthwise fast path
        out = np.einsum("nchwij,cij->nchw", win, weight[:, 0])
    else:
        cpg_in, cpg_out = cin // groups, cout // groups
        out = np.empty((n, cout, ho, wo), dtype=np.result_type(x, weight))
        for g in range(groups):
            wg = weight[g * cpg_out:(g + 1) * cpg_out].reshape(cpg_out, -1)
            cols = (
                win[:, g * cpg_in:(g + 1) * cpg_in]
                .transpose(0, 2, 3, 1, 4, 5)
                .reshape(n * ho * wo, cpg_in * kh * kw)
            )
            out[:, g * cpg_out:(g + 1) * cpg_out] = (
                (cols @ wg.T).reshape(n, ho, wo, cpg_out).transpose(0, 3, 1, 2)
            )
    out = np.ascontiguousarray(out)
    if bias is not None:
        out = out + bias.reshape(1, cout, 1, 1)
    return out


def batchnorm_infer(x, gamma, beta, mean, var, eps=1e-5):
    """Inference-mode batch normalization over the channel axis (axis 1).

    y_c = gamma_c * (x_c - mean_c) / sqrt(var_c + eps) + beta_c
    """
    x = _require_4d(x, "input")
    c = x.shape[1]
    vecs = []
    for name, v in (("gamma", gamma), ("beta", beta), ("mean", mean), ("var", var)):
        v = np.asarray(v, dtype=x.dtype).reshape(-1)
        if v.shape != (c,):
            raise ShapeError(f"{name} has {v.size} entries, expected {c} channels")
        vecs.append(v)
    gamma, beta, mean, var = vecs
    if np.any(var < 0):
        raise ValueError("negative variance in batchnorm buffers")
    shape = (1, c, 1, 1)
    scale = gamma / np.sqrt(var + x.dtype.type(eps))
    return x * scale.reshape(shape) + (beta - mean * scale).reshape(shape)


def sigmoid(x):
    """Numerically stable logistic function."""
    x = np.asarray(x)
    out = np.empty_like(x, dtype=x.dtype if x.dtype.kind == "f" else np.float64)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def silu(x):
    """x * sigmoid(x), elementwise."""
    x = np.asarray(x)
    return x * sigmoid(x)


def relu(x):
    x = np.asarray(x)
    return np.maximum(x, x.dtype.type(0))


def maxpool2d(x, k, stride=1, pad=0):
    """Max over k*k windows; padded cells never win (ignored).

    Requires pad < k so every window sees at least one real cell.
    """
    x = _require_4d(x, "input")
    if pad >= k:
        raise ShapeError(f"pad {pad} must be smaller than kernel {k}")
    n, c, h, w = x.shape
    if h + 2 * pad < k or w + 2 * pad < k:
        raise ShapeError(f"window {k}x{k} larger than padded input {h + 2 * pad}x{w + 2 * pad}")
    if pad:
        fill = np.array(-np.inf, dtype=x.dtype) if x.dtype.kind == "f" else np.iinfo(x.dtype).min
        x = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad)), constant_values=fill)
    win = _windows(x, k, k, stride)
    return np.ascontiguousarray(win.max(axis=(-2, -1)))


def nearest_upsample(x, scale):
    """Replicate each pixel scale x scale times."""
    x = _require_4d(x, "input")
    if scale < 1 or int(scale) != scale:
        raise ValueError(f"scale must be a positive integer, got {scale}")
    scale = int(scale)
    if scale == 1:
        return x.copy()
    return np.repeat(np.repeat(x, scale, axis=2), scale, axis=3)


def concat_channels(xs):
    """Concatenate along the channel axis; all inputs must share N, H, W."""
    if len(xs) == 0:
        raise ShapeError("concat requires at least one input")
    xs = [_require_4d(x, f"input {i}") for i, x in enumerate(xs)]
    ref = xs[0].shape
    for i, x in enumerate(xs[1:], start=1):
        if (x.shape[0],) + x.shape[2:] != (ref[0],) + ref[2:]:
            raise ShapeError(
                f"input {i} has N,H,W {(x.shape[0], x.shape[2], x.shape[3])}, "
                f"expected {(ref[0], ref[2], ref[3])}"
            )
    if len(xs) == 1:
        return xs[0].copy()
    return np.concatenate(xs, axis=1)


def softmax_lastdim(x):
    """Softmax over the last axis, stabilized by max subtraction."""
    x = np.asarray(x)
    e = np.exp(x - x.max(axis=-1, keepdims=True))
    return e / e.sum(axis=-1, keepdims=True)


def linear(x, weight, bias=None):
    """Affine map over the last axis: y = x @ weight.T + bias.

    weight has shape (Dout, Din); x has shape (..., Din).
    """
    x = np.asarray(x)
    weight = np.asarray(weight)
    if weight.ndim != 2:
        raise ShapeError(f"weight must be 2-D (Dout, Din), got {weight.shape}")
    if x.shape[-1] != weight.shape[1]:
        raise ShapeError(
            f"last input dim {x.shape[-1]} != weight input dim {weight.shape[1]}"
        )
    y = x @ weight.T
    if bias is not None:
        bias = np.asarray(bias)
        if bias.shape != (weight.shape[0],):
            raise ShapeError(f"bias shape {bias.shape} != ({weight.shape[0]},)")
        y = y + bias
    return y
