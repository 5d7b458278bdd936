# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled inner loops for the tensor core.

Every routine here has a twin in ``_fallback.py`` with the same signature.
Summation order is fixed: each output element accumulates its terms left to
right over the reduction index, so results do not depend on blocking.
"""
import numpy as np
cimport numpy as cnp

cnp.import_array()

BACKEND = "compiled"


def matmul(const double[:, ::1] a, const double[:, ::1] b):
    cdef Py_ssize_t m = a.shape[0], kk = a.shape[1], n = b.shape[1]
    cdef Py_ssize_t i, j, k
    cdef double aik
    out = np.zeros((m, n), dtype=np.float64)
    cdef double[:, ::1] c = out
    for i in range(m):
        for k in range(kk):
            aik = a[i, k]
            for j in range(n):
                c[i, j] += aik * b[k, j]
    return out


def symv_packed(const double[::1] p, Py_ssize_t n, const double[::1] x):
    cdef Py_ssize_t i, j, off = 0
    cdef double pij, xi, acc
    out = np.zeros(n, dtype=np.float64)
    cdef double[::1] y = out
    for i in range(n):
        xi = x[i]
        acc = y[i] + p[off] * xi
        for j in range(i + 1, n):
            pij = p[off + j - i]
            acc += pij * x[j]
            y[j] += pij * xi
        y[i] = acc
        off += n - i
    return out


def symm_packed(const double[::1] p, Py_ssize_t n, const double[:, ::1] b):
    cdef Py_ssize_t m = b.shape[1]
    cdef Py_ssize_t i, j, c, off = 0
    cdef double pij
    out = np.zeros((n, m), dtype=np.float64)
    cdef double[:, ::1] y = out
    for i in range(n):
        pij = p[off]
        for c in range(m):
            y[i, c] += pij * b[i, c]
        for j in range(i + 1, n):
            pij = p[off + j - i]
            for c in range(m):
                y[i, c] += pij * b[j, c]
                y[j, c] += pij * b[i, c]
        off += n - i
    return out


def im2col(const double[:, :, ::1] x, Py_ssize_t k, Py_ssize_t stride, Py_ssize_t pad,
           Py_ssize_t h_out, Py_ssize_t w_out):
    cdef Py_ssize_t C = x.shape[0], H = x.shape[1], W = x.shape[2]
    cdef Py_ssize_t c, ki, kj, oi, oj, row, ii, jj
    out = np.zeros((C * k * k, h_out * w_out), dtype=np.float64)
    cdef double[:, ::1] col = out
    for c in range(C):
        for ki in range(k):
            for kj in range(k):
                row = (c * k + ki) * k + kj
                for oi in range(h_out):
                    ii = oi * stride + ki - pad
                    if ii < 0 or ii >= H:
                        continue
                    for oj in range(w_out):
                        jj = oj * stride + kj - pad
                        if 0 <= jj < W:
                            col[row, oi * w_out + oj] = x[c, ii, jj]
    return out
