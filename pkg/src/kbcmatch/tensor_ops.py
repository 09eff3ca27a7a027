"""Dense-tensor primitives every other module is built on.

Values are plain ``numpy.ndarray`` (row-major, float32 by default, float64 for
gradient checks). All functions are pure; conventions fixed repo-wide:

* ``conv2d_same`` is cross-correlation (no kernel flip) with zero padding.
* ``bilinear_resize`` uses the align-corners convention.
* norm denominators use ``eps = 1e-5`` unless stated otherwise.
"""

from __future__ import annotations

import numpy as np
from scipy.special import erf

from .errors import ConfigError, ShapeError

NORM_EPS = 1e-5


def _as_array(x) -> np.ndarray:
    return np.asarray(x)


def conv2d_batched(x: np.ndarray, kernel: np.ndarray, bias: np.ndarray | None = None) -> np.ndarray:
    """Same-padded 2D cross-correlation over a batch: (N,Cin,H,W) -> (N,Cout,H,W).

    The kernel must be square with odd side. Implemented as im2col + GEMM so the
    same code path serves both the tiny unit cases and the benchmark sizes.
    """
    x = _as_array(x)
    kernel = _as_array(kernel)
    if x.ndim != 4:
        raise ShapeError(f"conv2d input must have 4 axes (N,Cin,H,W), got {x.ndim}")
    if kernel.ndim != 4:
        raise ShapeError(f"conv2d kernel must have 4 axes (Cout,Cin,k,k), got {kernel.ndim}")
    n, cin, h, w = x.shape
    cout, kcin, kh, kw = kernel.shape
    if kcin != cin:
        raise ShapeError(f"kernel input-channel axis: expected {cin}, got {kcin}")
    if kh != kw:
        raise ShapeError(f"kernel must be square, got {kh}x{kw}")
    if kh % 2 == 0:
        raise ShapeError(f"kernel side must be odd, got {kh}")
    if bias is not None:
        bias = _as_array(bias)
        if bias.shape != (cout,):
            raise ShapeError(f"bias axis: expected ({cout},), got {bias.shape}")

    pad = kh // 2
    xp = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
    windows = np.lib.stride_tricks.sliding_window_view(xp, (kh, kw), axis=(2, 3))
    # (N,Cin,H,W,k,k) -> (N*H*W, Cin*k*k), matching kernel.reshape(cout, -1)
    cols = np.ascontiguousarray(windows.transpose(0, 2, 3, 1, 4, 5)).reshape(n * h * w, cin * kh * kw)
    out = cols @ kernel.reshape(cout, -1).T
    if bias is not None:
        out = out + bias
    return out.reshape(n, h, w, cout).transpose(0, 3, 1, 2).astype(x.dtype, copy=False)


def conv2d_same(image: np.ndarray, kernel: np.ndarray, bias: np.ndarray) -> np.ndarray:
    """Zero-padded 2D cross-correlation: (Cin,H,W) x (Cout,Cin,k,k) -> (Cout,H,W)."""
    image = _as_array(image)
    if image.ndim != 3:
        raise ShapeError(f"conv2d_same input must have 3 axes (Cin,H,W), got {image.ndim}")
    return conv2d_batched(image[None], kernel, bias)[0]


def conv2d_backward(x: np.ndarray, kernel: np.ndarray, grad_out: np.ndarray):
    """Gradients of conv2d_batched: returns (d_kernel, d_bias, d_input)."""
    n, cin, h, w = x.shape
    cout, _, kh, kw = kernel.shape
    pad = kh // 2
    xp = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
    windows = np.lib.stride_tricks.sliding_window_view(xp, (kh, kw), axis=(2, 3))
    cols = np.ascontiguousarray(windows.transpose(0, 2, 3, 1, 4, 5)).reshape(n * h * w, cin * kh * kw)
    g = grad_out.transpose(0, 2, 3, 1).reshape(n * h * w, cout)
    d_kernel = (g.T @ cols).reshape(cout, cin, kh, kw)
    d_bias = g.sum(axis=0)
    # input gradient = same-padded cross-correlation with the flipped, transposed kernel
    flipped = kernel[:, :, ::-1, ::-1].transpose(1, 0, 2, 3)
    d_input = conv2d_batched(grad_out, np.ascontiguousarray(flipped))
    return d_kernel, d_bias, d_input


def _axis_positions(n_out: int, n_in: int, dtype=np.float64) -> np.ndarray:
    """Align-corners sample positions for one axis."""
    if n_out == 1 or n_in == 1:
        return np.zeros(n_out, dtype=dtype)
    return np.arange(n_out, dtype=dtype) * ((n_in - 1) / (n_out - 1))


def bilinear_resize(image: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Align-corners bilinear resize: (C,H,W) -> (C,out_h,out_w)."""
    image = _as_array(image)
    if image.ndim != 3:
        raise ShapeError(f"bilinear_resize input must have 3 axes (C,H,W), got {image.ndim}")
    if out_h < 1 or out_w < 1:
        raise ShapeError(f"output extents must be >= 1, got {out_h}x{out_w}")
    _, h, w = image.shape
    if out_h == h and out_w == w:
        return image.copy()
    ys = _axis_positions(out_h, h)
    xs = _axis_positions(out_w, w)
    y0 = np.floor(ys).astype(int)
    x0 = np.floor(xs).astype(int)
    y1 = np.minimum(y0 + 1, h - 1)
    x1 = np.minimum(x0 + 1, w - 1)
    wy = (ys - y0)[None, :, None]
    wx = (xs - x0)[None, None, :]
    top = image[:, y0][:, :, x0] * (1 - wx) + image[:, y0][:, :, x1] * wx
    bot = image[:, y1][:, :, x0] * (1 - wx) + image[:, y1][:, :, x1] * wx
    out = top * (1 - wy) + bot * wy
    return out.astype(image.dtype, copy=False)


def row_softmax(x: np.ndarray, scale: float = 1.0) -> np.ndarray:
    """Numerically stable softmax along the trailing axis of ``scale * x``."""
    if scale <= 0:
        raise ConfigError(f"softmax scale must be positive, got {scale}")
    x = _as_array(x)
    z = scale * x
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def group_norm(x: np.ndarray, groups: int, gamma: np.ndarray, beta: np.ndarray,
               eps: float = NORM_EPS) -> np.ndarray:
    """Group normalisation over (C, *spatial): per-group zero mean / unit variance, then affine."""
    return group_norm_batched(_as_array(x)[None], groups, gamma, beta, eps)[0]


def group_norm_batched(x: np.ndarray, groups: int, gamma: np.ndarray, beta: np.ndarray,
                       eps: float = NORM_EPS) -> np.ndarray:
    x = _as_array(x)
    b, c = x.shape[0], x.shape[1]
    if c % groups != 0:
        raise ConfigError(f"channel count {c} not divisible by {groups} groups")
    gamma = _as_array(gamma)
    beta = _as_array(beta)
    if gamma.shape != (c,) or beta.shape != (c,):
        raise ShapeError(f"gamma/beta must have shape ({c},)")
    spatial = x.shape[2:]
    g = x.reshape(b, groups, -1)
    mean = g.mean(axis=2, keepdims=True)
    var = g.var(axis=2, keepdims=True)
    norm = (g - mean) / np.sqrt(var + eps)
    norm = norm.reshape(b, c, *spatial)
    shape = (1, c) + (1,) * len(spatial)
    out = norm * gamma.reshape(shape) + beta.reshape(shape)
    return out.astype(x.dtype, copy=False)


def linear(x: np.ndarray, weight: np.ndarray, bias: np.ndarray) -> np.ndarray:
    """Affine map on the trailing axis: (...,Din) x (Dout,Din) -> (...,Dout)."""
    x = _as_array(x)
    weight = _as_array(weight)
    bias = _as_array(bias)
    if weight.ndim != 2:
        raise ShapeError(f"weight must have 2 axes (Dout,Din), got {weight.ndim}")
    dout, din = weight.shape
    if x.shape[-1] != din:
        raise ShapeError(f"trailing input axis: expected {din}, got {x.shape[-1]}")
    if bias.shape != (dout,):
        raise ShapeError(f"bias axis: expected ({dout},), got {bias.shape}")
    return (x @ weight.T + bias).astype(x.dtype, copy=False)


def relu(x: np.ndarray) -> np.ndarray:
    return np.maximum(x, 0)


def gelu(x: np.ndarray) -> np.ndarray:
    """Exact (erf-based) GELU."""
    x = _as_array(x)
    return (0.5 * x * (1.0 + erf(x / np.sqrt(2.0)))).astype(x.dtype, copy=False)
