# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled convolution kernels: valid correlation, forward and backward.

Same contract as pykernels; inputs must be C-contiguous float32/float64.
Single-threaded on purpose so results are bit-reproducible regardless of
the host's thread configuration.
"""
import numpy as np

ctypedef fused real:
    float
    double


def conv1d_valid_fwd(real[:, :, ::1] x, real[:, :, ::1] w, Py_ssize_t stride):
    cdef Py_ssize_t nb = x.shape[0], ci = x.shape[1], tp = x.shape[2]
    cdef Py_ssize_t co = w.shape[0], k = w.shape[2]
    cdef Py_ssize_t to = (tp - k) // stride + 1
    if w.shape[1] != ci:
        raise ValueError("kernel/input channel mismatch")
    if real is float:
        out_np = np.zeros((nb, co, to), dtype=np.float32)
    else:
        out_np = np.zeros((nb, co, to), dtype=np.float64)
    cdef real[:, :, ::1] out = out_np
    cdef Py_ssize_t b, o, c, t, j
    cdef real wv
    with nogil:
        for b in range(nb):
            for o in range(co):
                for c in range(ci):
                    for j in range(k):
                        wv = w[o, c, j]
                        for t in range(to):
                            out[b, o, t] += wv * x[b, c, t * stride + j]
    return out_np


def conv1d_valid_bwd(real[:, :, ::1] x, real[:, :, ::1] w,
                     real[:, :, ::1] dy, Py_ssize_t stride):
    cdef Py_ssize_t nb = x.shape[0], ci = x.shape[1]
    cdef Py_ssize_t co = w.shape[0], k = w.shape[2]
    cdef Py_ssize_t to = dy.shape[2]
    if real is float:
        dx_np = np.zeros((nb, ci, x.shape[2]), dtype=np.float32)
        dw_np = np.zeros((co, ci, k), dtype=np.float32)
    else:
        dx_np = np.zeros((nb, ci, x.shape[2]), dtype=np.float64)
        dw_np = np.zeros((co, ci, k), dtype=np.float64)
    cdef real[:, :, ::1] dx = dx_np
    cdef real[:, :, ::1] dw = dw_np
    cdef Py_ssize_t b, o, c, t, j
    cdef real wv, acc, g
    with nogil:
        for b in range(nb):
            for o in range(co):
                for c in range(ci):
                    for j in range(k):
                        wv = w[o, c, j]
                        acc = 0
                        for t in range(to):
                            g = dy[b, o, t]
                            acc += g * x[b, c, t * stride + j]
                            dx[b, c, t * stride + j] += g * wv
                        dw[o, c, j] += acc
    return dx_np, dw_np


def conv2d_valid_fwd(real[:, :, :, ::1] x, real[:, :, :, ::1] w,
                     Py_ssize_t sh, Py_ssize_t sw):
    cdef Py_ssize_t nb = x.shape[0], ci = x.shape[1], hp = x.shape[2], wp = x.shape[3]
    cdef Py_ssize_t co = w.shape[0], kh = w.shape[2], kw = w.shape[3]
    cdef Py_ssize_t ho = (hp - kh) // sh + 1
    cdef Py_ssize_t wo = (wp - kw) // sw + 1
    if w.shape[1] != ci:
        raise ValueError("kernel/input channel mismatch")
    if real is float:
        out_np = np.zeros((nb, co, ho, wo), dtype=np.float32)
    else:
        out_np = np.zeros((nb, co, ho, wo), dtype=np.float64)
    cdef real[:, :, :, ::1] out = out_np
    cdef Py_ssize_t b, o, c, u, v, i, j
    cdef real wv
    with nogil:
        for b in range(nb):
            for o in range(co):
                for c in range(ci):
                    for u in range(kh):
                        for v in range(kw):
                            wv = w[o, c, u, v]
                            for i in range(ho):
                                for j in range(wo):
                                    out[b, o, i, j] += wv * x[b, c, i * sh + u, j * sw + v]
    return out_np


def conv2d_valid_bwd(real[:, :, :, ::1] x, real[:, :, :, ::1] w,
                     real[:, :, :, ::1] dy, Py_ssize_t sh, Py_ssize_t sw):
    cdef Py_ssize_t nb = x.shape[0], ci = x.shape[1]
    cdef Py_ssize_t co = w.shape[0], kh = w.shape[2], kw = w.shape[3]
    cdef Py_ssize_t ho = dy.shape[2], wo = dy.shape[3]
    if real is float:
        dx_np = np.zeros((nb, ci, x.shape[2], x.shape[3]), dtype=np.float32)
        dw_np = np.zeros((co, ci, kh, kw), dtype=np.float32)
    else:
        dx_np = np.zeros((nb, ci, x.shape[2], x.shape[3]), dtype=np.float64)
        dw_np = np.zeros((co, ci, kh, kw), dtype=np.float64)
    cdef real[:, :, :, ::1] dx = dx_np
    cdef real[:, :, :, ::1] dw = dw_np
    cdef Py_ssize_t b, o, c, u, v, i, j
    cdef real wv, acc, g
    with nogil:
        for b in range(nb):
            for o in range(co):
                for c in range(ci):
                    for u in range(kh):
                        for v in range(kw):
                            wv = w[o, c, u, v]
                            acc = 0
                            for i in range(ho):
                                for j in range(wo):
                                    g = dy[b, o, i, j]
                                    acc += g * x[b, c, i * sh + u, j * sw + v]
                                    dx[b, c, i * sh + u, j * sw + v] += g * wv
                            dw[o, c, u, v] += acc
    return dx_np, dw_np
