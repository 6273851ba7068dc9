"""Pure-numpy convolution kernels (fallback when the compiled core is absent).

All kernels compute *valid* correlations on pre-padded inputs; padding
policy lives one level up in cyclevc.nn.functional.  The loops run over
the (small) kernel taps so the heavy lifting stays inside BLAS matmuls.
"""
from __future__ import annotations

import numpy as np


def conv1d_valid_fwd(x: np.ndarray, w: np.ndarray, stride: int) -> np.ndarray:
    # x: (B, Cin, Tp), w: (Cout, Cin, K) -> (B, Cout, To)
    nb, ci, tp = x.shape
    co, _, k = w.shape
    to = (tp - k) // stride + 1
    out = np.zeros((nb, co, to), dtype=x.dtype)
    for j in range(k):
        xs = x[:, :, j : j + stride * to : stride]
        out += np.matmul(w[:, :, j], xs)
    return out


def conv1d_valid_bwd(
    x: np.ndarray, w: np.ndarray, dy: np.ndarray, stride: int
) -> tuple[np.ndarray, np.ndarray]:
    _, _, k = w.shape
    to = dy.shape[2]
    dx = np.zeros_like(x)
    dw = np.zeros_like(w)
    for j in range(k):
        xs = x[:, :, j : j + stride * to : stride]
        dw[:, :, j] = np.tensordot(dy, xs, axes=([0, 2], [0, 2]))
        dx[:, :, j : j + stride * to : stride] += np.matmul(w[:, :, j].T, dy)
    return dx, dw


def conv2d_valid_fwd(x: np.ndarray, w: np.ndarray, sh: int, sw: int) -> np.ndarray:
    # x: (B, Cin, Hp, Wp), w: (Cout, Cin, Kh, Kw) -> (B, Cout, Ho, Wo)
    nb, ci, hp, wp = x.shape
    co, _, kh, kw = w.shape
    ho = (hp - kh) // sh + 1
    wo = (wp - kw) // sw + 1
    out = np.zeros((nb, co, ho, wo), dtype=x.dtype)
    for u in range(kh):
        for v in range(kw):
            xs = x[:, :, u : u + sh * ho : sh, v : v + sw * wo : sw]
            out += np.einsum("oc,bchw->bohw", w[:, :, u, v], xs, optimize=True)
    return out


def conv2d_valid_bwd(
    x: np.ndarray, w: np.ndarray, dy: np.ndarray, sh: int, sw: int
) -> tuple[np.ndarray, np.ndarray]:
    _, _, kh, kw = w.shape
    ho, wo = dy.shape[2], dy.shape[3]
    dx = np.zeros_like(x)
    dw = np.zeros_like(w)
    for u in range(kh):
        for v in range(kw):
            xs = x[:, :, u : u + sh * ho : sh, v : v + sw * wo : sw]
            dw[:, :, u, v] = np.einsum("bohw,bchw->oc", dy, xs, optimize=True)
            dx[:, :, u : u + sh * ho : sh, v : v + sw * wo : sw] += np.einsum(
                "oc,bohw->bchw", w[:, :, u, v], dy, optimize=True
            )
    return dx, dw
