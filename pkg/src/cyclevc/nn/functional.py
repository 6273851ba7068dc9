"""Differentiable ops for the gated-CNN stack.

Convolutions use "same" padding (output length = ceil(input/stride)),
realized as an explicit zero-pad followed by a valid correlation from
the kernel backend.  Shapes follow the (batch, channels, time) and
(batch, channels, height, width) conventions.
"""
from __future__ import annotations

import numpy as np

from . import kernels
from .autograd import Tensor, make_op

__all__ = [
    "as_tensor",
    "add",
    "sub",
    "mul",
    "add_scalar",
    "mul_scalar",
    "absolute",
    "square",
    "mean",
    "sigmoid",
    "reshape",
    "linear",
    "conv1d",
    "conv2d",
    "pixel_shuffle_1d",
    "pixel_unshuffle_1d",
    "instance_norm",
]


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(np.asarray(x, dtype=np.float64))


_t = as_tensor


def add(a, b) -> Tensor:
    a, b = _t(a), _t(b)
    if a.shape != b.shape:
        raise ValueError(f"add: shape mismatch {a.shape} vs {b.shape}")
    return make_op(a.data + b.data, (a, b), lambda dy: (dy, dy))


def sub(a, b) -> Tensor:
    a, b = _t(a), _t(b)
    if a.shape != b.shape:
        raise ValueError(f"sub: shape mismatch {a.shape} vs {b.shape}")
    return make_op(a.data - b.data, (a, b), lambda dy: (dy, -dy))


def mul(a, b) -> Tensor:
    a, b = _t(a), _t(b)
    if a.shape != b.shape:
        raise ValueError(f"mul: shape mismatch {a.shape} vs {b.shape}")
    return make_op(a.data * b.data, (a, b), lambda dy: (dy * b.data, dy * a.data))


def add_scalar(a, c) -> Tensor:
    a = _t(a)
    c = a.data.dtype.type(c)
    return make_op(a.data + c, (a,), lambda dy: (dy,))


def mul_scalar(a, c) -> Tensor:
    a = _t(a)
    c = a.data.dtype.type(c)
    return make_op(a.data * c, (a,), lambda dy: (dy * c,))


def absolute(a) -> Tensor:
    a = _t(a)
    return make_op(np.abs(a.data), (a,), lambda dy: (dy * np.sign(a.data),))


def square(a) -> Tensor:
    a = _t(a)
    return make_op(a.data * a.data, (a,), lambda dy: (dy * (2.0 * a.data),))


def mean(a) -> Tensor:
    a = _t(a)
    n = a.data.size
    if n == 0:
        raise ValueError("mean of empty tensor")

    def bwd(dy):
        return (np.full(a.shape, dy / n, dtype=a.data.dtype),)

    return make_op(a.data.mean(), (a,), bwd)


def sigmoid(a) -> Tensor:
    a = _t(a)
    x = a.data
    # numerically stable in both tails
    out = np.where(x >= 0, 1.0 / (1.0 + np.exp(-np.abs(x))), np.exp(-np.abs(x)) / (1.0 + np.exp(-np.abs(x))))
    out = out.astype(x.dtype, copy=False)
    return make_op(out, (a,), lambda dy: (dy * out * (1.0 - out),))


def reshape(a, shape) -> Tensor:
    a = _t(a)
    orig = a.shape
    return make_op(a.data.reshape(shape), (a,), lambda dy: (dy.reshape(orig),))


def linear(x, w, b) -> Tensor:
    """x: (B, N), w: (N, M), b: (M,) -> (B, M)."""
    x, w, b = _t(x), _t(w), _t(b)

    def bwd(dy):
        return (dy @ w.data.T, x.data.T @ dy, dy.sum(axis=0))

    return make_op(x.data @ w.data + b.data, (x, w, b), bwd)


def _same_pad(extent: int, kernel: int, stride: int) -> tuple[int, int, int]:
    out = -(-extent // stride)
    total = max((out - 1) * stride + kernel - extent, 0)
    return out, total // 2, total - total // 2


def _contig(arr: np.ndarray) -> np.ndarray:
    return np.ascontiguousarray(arr)


def conv1d(x, w, b=None, stride: int = 1) -> Tensor:
    """Same-padded 1D correlation. x: (B, Cin, T), w: (Cout, Cin, K)."""
    x, w = _t(x), _t(w)
    nb, ci, t_in = x.shape
    co, ci_w, k = w.shape
    if ci_w != ci:
        raise ValueError(f"conv1d: input has {ci} channels, kernel expects {ci_w}")
    _, pl, pr = _same_pad(t_in, k, stride)
    xp = _contig(np.pad(x.data, ((0, 0), (0, 0), (pl, pr))))
    y = kernels.conv1d_valid_fwd(xp, _contig(w.data), stride)
    if b is None:
        def bwd(dy):
            dxp, dw = kernels.conv1d_valid_bwd(xp, _contig(w.data), _contig(dy), stride)
            return (dxp[:, :, pl : pl + t_in], dw)

        return make_op(y, (x, w), bwd)
    b = _t(b)

    def bwd_b(dy):
        dy = _contig(dy)
        dxp, dw = kernels.conv1d_valid_bwd(xp, _contig(w.data), dy, stride)
        return (dxp[:, :, pl : pl + t_in], dw, dy.sum(axis=(0, 2)))

    return make_op(y + b.data[:, None], (x, w, b), bwd_b)


def conv2d(x, w, b=None, stride: tuple[int, int] = (1, 1)) -> Tensor:
    """Same-padded 2D correlation. x: (B, Cin, H, W), w: (Cout, Cin, Kh, Kw)."""
    x, w = _t(x), _t(w)
    nb, ci, h_in, w_in = x.shape
    co, ci_w, kh, kw = w.shape
    sh, sw = stride
    if ci_w != ci:
        raise ValueError(f"conv2d: input has {ci} channels, kernel expects {ci_w}")
    _, pt, pb = _same_pad(h_in, kh, sh)
    _, pleft, pright = _same_pad(w_in, kw, sw)
    xp = _contig(np.pad(x.data, ((0, 0), (0, 0), (pt, pb), (pleft, pright))))
    y = kernels.conv2d_valid_fwd(xp, _contig(w.data), sh, sw)
    bias = None if b is None else _t(b)

    def bwd(dy):
        dy = _contig(dy)
        dxp, dw = kernels.conv2d_valid_bwd(xp, _contig(w.data), dy, sh, sw)
        dx = dxp[:, :, pt : pt + h_in, pleft : pleft + w_in]
        if bias is None:
            return (dx, dw)
        return (dx, dw, dy.sum(axis=(0, 2, 3)))

    if bias is None:
        return make_op(y, (x, w), bwd)
    return make_op(y + bias.data[:, None, None], (x, w, bias), bwd)


def pixel_shuffle_1d(x, r: int) -> Tensor:
    """(B, C*r, T) -> (B, C, T*r); out[b, c, t*r + i] = in[b, c*r + i, t]."""
    x = _t(x)
    nb, cr, t = x.shape
    if cr % r != 0:
        raise ValueError(f"pixel_shuffle_1d: {cr} channels not divisible by r={r}")
    c = cr // r
    y = x.data.reshape(nb, c, r, t).transpose(0, 1, 3, 2).reshape(nb, c, t * r)

    def bwd(dy):
        return (dy.reshape(nb, c, t, r).transpose(0, 1, 3, 2).reshape(nb, cr, t),)

    return make_op(y, (x,), bwd)


def pixel_unshuffle_1d(x, r: int) -> Tensor:
    """Exact inverse of pixel_shuffle_1d."""
    x = _t(x)
    nb, c, tr = x.shape
    if tr % r != 0:
        raise ValueError(f"pixel_unshuffle_1d: length {tr} not divisible by r={r}")
    t = tr // r
    y = x.data.reshape(nb, c, t, r).transpose(0, 1, 3, 2).reshape(nb, c * r, t)

    def bwd(dy):
        return (dy.reshape(nb, c, r, t).transpose(0, 1, 3, 2).reshape(nb, c, tr),)

    return make_op(y, (x,), bwd)


def instance_norm(x, scale, shift, eps: float = 1e-5) -> Tensor:
    """Per-instance, per-channel standardization over the spatial axes,
    then the affine map scale * xhat + shift.  scale/shift: (C,)."""
    x, scale, shift = _t(x), _t(scale), _t(shift)
    d = x.data
    if d.ndim < 3:
        raise ValueError("instance_norm expects (B, C, *spatial)")
    nb, c = d.shape[:2]
    flat = d.reshape(nb, c, -1)
    n = flat.shape[2]
    mu = flat.mean(axis=2, keepdims=True)
    var = flat.var(axis=2, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = (flat - mu) * inv
    y = (scale.data[:, None] * xhat + shift.data[:, None]).reshape(d.shape)

    def bwd(dy):
        dyf = dy.reshape(nb, c, -1)
        dshift = dyf.sum(axis=(0, 2))
        dscale = (dyf * xhat).sum(axis=(0, 2))
        dxhat = dyf * scale.data[:, None]
        dflat = inv * (
            dxhat
            - dxhat.mean(axis=2, keepdims=True)
            - xhat * (dxhat * xhat).mean(axis=2, keepdims=True)
        )
        return (dflat.reshape(d.shape).astype(d.dtype, copy=False), dscale, dshift)

    return make_op(y.astype(d.dtype, copy=False), (x, scale, shift), bwd)
