"""Dense and packed-symmetric kernels.

Tensors are plain ``numpy.float64`` arrays.  Every function here returns a
fresh array and never writes to its inputs.
"""
from dataclasses import dataclass

import numpy as np

from ..errors import AsymmetryError, DimensionError
from . import _backend


def _f64(a, ndim=None, name="input"):
    a = np.ascontiguousarray(a, dtype=np.float64)
    if ndim is not None and a.ndim != ndim:
        raise DimensionError(f"{name} must be {ndim}-D, got shape {a.shape}")
    return a


def packed_size(n):
    return n * (n + 1) // 2


def packed_offset(i, j, n):
    """Offset of entry (i, j), i <= j, in the row-major upper-triangle layout."""
    if i > j:
        i, j = j, i
    return i * n - i * (i - 1) // 2 + (j - i)


@dataclass(frozen=True)
class PackedSymmetric:
    """Upper triangle of a symmetric n x n matrix, stored row by row."""

    n: int
    data: np.ndarray

    def __post_init__(self):
        data = np.array(self.data, dtype=np.float64).ravel()
        if data.size != packed_size(self.n):
            raise DimensionError(
                f"packed data for n={self.n} needs {packed_size(self.n)} values, got {data.size}")
        data.flags.writeable = False
        object.__setattr__(self, "data", data)

    def __getitem__(self, ij):
        return self.data[packed_offset(ij[0], ij[1], self.n)]

    def unpack(self):
        return unpack(self)


def _triu_rows(n):
    return np.triu_indices(n)


def pack_symmetric(s, tol=0.0):
    s = _f64(s, 2, "s")
    n = s.shape[0]
    if s.shape[1] != n:
        raise DimensionError(f"pack_symmetric needs a square matrix, got {s.shape}")
    if n:
        dev = np.abs(s - s.T)
        k = int(np.argmax(dev))
        i, j = divmod(k, n)
        if dev[i, j] > tol:
            raise AsymmetryError(float(dev[i, j]), (min(i, j), max(i, j)))
    return PackedSymmetric(n, s[_triu_rows(n)])


def unpack(p):
    n = p.n
    out = np.empty((n, n))
    iu = _triu_rows(n)
    out[iu] = p.data
    out[iu[1], iu[0]] = p.data
    return out


def matmul(a, b):
    a = _f64(a, 2, "a")
    b = _f64(b, 2, "b")
    if a.shape[1] != b.shape[0]:
        raise DimensionError(f"matmul inner dimensions differ: {a.shape} x {b.shape}")
    return _backend.kernels.matmul(a, b)


def symv_packed(p, x, backend=None):
    x = _f64(x, 1, "x")
    if x.shape[0] != p.n:
        raise DimensionError(f"symv_packed: x has length {x.shape[0]}, matrix order is {p.n}")
    return _backend.get(backend).symv_packed(p.data, p.n, x)


def symm_packed(p, b, backend=None):
    b = _f64(b, 2, "b")
    if b.shape[0] != p.n:
        raise DimensionError(f"symm_packed: b has {b.shape[0]} rows, matrix order is {p.n}")
    return _backend.get(backend).symm_packed(p.data, p.n, b)


def conv_output_size(size, k, stride, pad):
    span = size + 2 * pad - k
    if span < 0 or span % stride:
        raise DimensionError(
            f"output size ({size} + 2*{pad} - {k})/{stride} + 1 is not a positive integer")
    return span // stride + 1


def im2col(x, k, stride=1, pad=0, backend=None):
    """Unfold a C x H x W image into (C*k*k) x (H_out*W_out) columns."""
    x = _f64(x, 3, "input")
    h_out = conv_output_size(x.shape[1], k, stride, pad)
    w_out = conv_output_size(x.shape[2], k, stride, pad)
    return _backend.get(backend).im2col(x, k, stride, pad, h_out, w_out)


def conv2d(x, weight, stride=1, pad=0):
    x = _f64(x, 4, "input")
    weight = _f64(weight, 4, "weight")
    c_out, c_in, kh, kw = weight.shape
    if kh != kw:
        raise DimensionError(f"conv2d expects square kernels, got {kh}x{kw}")
    if x.shape[1] != c_in:
        raise DimensionError(f"conv2d: input has {x.shape[1]} channels, weight expects {c_in}")
    h_out = conv_output_size(x.shape[2], kh, stride, pad)
    w_out = conv_output_size(x.shape[3], kh, stride, pad)
    wmat = weight.reshape(c_out, -1)
    out = np.empty((x.shape[0], c_out, h_out, w_out))
    for b in range(x.shape[0]):
        out[b] = matmul(wmat, im2col(x[b], kh, stride, pad)).reshape(c_out, h_out, w_out)
    return out
