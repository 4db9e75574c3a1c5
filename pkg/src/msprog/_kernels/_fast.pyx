# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot kernels: tree split scan and causal dilated convolution.

Contracts match ``msprog._kernels._slow``; see the docstrings there.
"""

import numpy as np

cimport numpy as cnp

cnp.import_array()


def best_split(double[::1] values, double[::1] grad, double[::1] hess, int min_leaf):
    cdef Py_ssize_t n = values.shape[0]
    if n < 2 * min_leaf:
        return -1, 0.0
    cdef double g = 0.0, h = 0.0
    cdef Py_ssize_t i
    for i in range(n):
        g += grad[i]
        h += hess[i]
    cdef double eps = 1e-12
    cdef double parent = g * g / (h + eps)
    cdef double gl = 0.0, hl = 0.0, gr, hr, gain
    cdef double best_gain = 0.0
    cdef Py_ssize_t best_pos = -1
    for i in range(n - 1):
        gl += grad[i]
        hl += hess[i]
        if i + 1 < min_leaf or i + 1 > n - min_leaf:
            continue
        if values[i + 1] <= values[i]:
            continue
        gr = g - gl
        hr = h - hl
        gain = gl * gl / (hl + eps) + gr * gr / (hr + eps) - parent
        if gain > best_gain:
            best_gain = gain
            best_pos = i + 1
    if best_pos < 0 or best_gain <= 0.0:
        return -1, 0.0
    return best_pos, best_gain


def conv1d_fwd(double[:, :, ::1] x, double[:, :, ::1] w, double[::1] b, int dilation):
    cdef Py_ssize_t n = x.shape[0], T = x.shape[1], c_in = x.shape[2]
    cdef Py_ssize_t k = w.shape[0], c_out = w.shape[2]
    y_arr = np.empty((n, T, c_out), dtype=np.float64)
    cdef double[:, :, ::1] y = y_arr
    cdef Py_ssize_t s, t, j, ci, co, src
    cdef double acc
    with nogil:
        for s in range(n):
            for t in range(T):
                for co in range(c_out):
                    y[s, t, co] = b[co]
                for j in range(k):
                    src = t - j * dilation
                    if src < 0:
                        break
                    for ci in range(c_in):
                        acc = x[s, src, ci]
                        if acc != 0.0:
                            for co in range(c_out):
                                y[s, t, co] += acc * w[j, ci, co]
    return y_arr


def conv1d_bwd(double[:, :, ::1] x, double[:, :, ::1] w, double[:, :, ::1] dy, int dilation):
    cdef Py_ssize_t n = x.shape[0], T = x.shape[1], c_in = x.shape[2]
    cdef Py_ssize_t k = w.shape[0], c_out = w.shape[2]
    dx_arr = np.zeros((n, T, c_in), dtype=np.float64)
    dw_arr = np.zeros((k, c_in, c_out), dtype=np.float64)
    db_arr = np.zeros(c_out, dtype=np.float64)
    cdef double[:, :, ::1] dx = dx_arr
    cdef double[:, :, ::1] dw = dw_arr
    cdef double[::1] db = db_arr
    cdef Py_ssize_t s, t, j, ci, co, src
    cdef double d
    with nogil:
        for s in range(n):
            for t in range(T):
                for co in range(c_out):
                    d = dy[s, t, co]
                    if d == 0.0:
                        continue
                    db[co] += d
                    for j in range(k):
                        src = t - j * dilation
                        if src < 0:
                            break
                        for ci in range(c_in):
                            dx[s, src, ci] += d * w[j, ci, co]
                            dw[j, ci, co] += d * x[s, src, ci]
    return dx_arr, dw_arr, db_arr
