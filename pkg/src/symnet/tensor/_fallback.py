"""Pure-Python/numpy versions of the compiled kernels.

Selected when the extension is not built or ``SYMNET_PURE_PYTHON=1``.
``matmul`` keeps the compiled kernel's left-to-right order over the inner
index, so both backends agree bitwise there; the packed kernels only agree to
rounding.
"""
import numpy as np

BACKEND = "python"


def matmul(a, b):
    out = np.zeros((a.shape[0], b.shape[1]))
    for k in range(a.shape[1]):
        out += a[:, k:k + 1] * b[k:k + 1, :]
    return out


def symv_packed(p, n, x):
    y = np.zeros(n)
    off = 0
    for i in range(n):
        row = p[off:off + n - i]
        y[i] += row @ x[i:]
        y[i + 1:] += row[1:] * x[i]
        off += n - i
    return y


def symm_packed(p, n, b):
    y = np.zeros((n, b.shape[1]))
    off = 0
    for i in range(n):
        row = p[off:off + n - i]
        y[i] += row @ b[i:]
        y[i + 1:] += np.outer(row[1:], b[i])
        off += n - i
    return y


def im2col(x, k, stride, pad, h_out, w_out):
    C = x.shape[0]
    img = np.pad(x, ((0, 0), (pad, pad), (pad, pad)))
    col = np.empty((C, k, k, h_out, w_out))
    for ki in range(k):
        i_max = ki + stride * h_out
        for kj in range(k):
            j_max = kj + stride * w_out
            col[:, ki, kj] = img[:, ki:i_max:stride, kj:j_max:stride]
    return col.reshape(C * k * k, h_out * w_out)
