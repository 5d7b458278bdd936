"""Symmetric constructions and their adjoints.

All functions accept a stack of matrices: leading axes are batch axes, the
last two are the matrix axes.  Outputs of the ``build_*`` functions are
bitwise symmetric; products are computed once and the upper triangle is
mirrored so rounding cannot break symmetry.
"""
import numpy as np

from ..errors import DimensionError
from ..tensor import PackedSymmetric


def _square(w, name="w"):
    w = np.asarray(w, dtype=np.float64)
    if w.ndim < 2 or w.shape[-1] != w.shape[-2]:
        raise DimensionError(f"{name} must be square in its last two axes, got shape {w.shape}")
    return w


def _swap(w):
    return np.swapaxes(w, -1, -2)


def _order_from_strict(length):
    # n(n-1)/2 == length
    n = int(round((1 + np.sqrt(1 + 8 * length)) / 2))
    if n * (n - 1) // 2 != length:
        raise DimensionError(f"{length} is not a strict-triangle size n(n-1)/2")
    return n


def mirror_upper(w):
    """Copy the upper triangle onto the lower one (diagonal kept)."""
    n = w.shape[-1]
    il = np.tril_indices(n, -1)
    out = np.array(w, dtype=np.float64, copy=True)
    out[..., il[0], il[1]] = out[..., il[1], il[0]]
    return out


# triangular ---------------------------------------------------------------

def build_triangular(u_strict, v):
    u_strict = np.asarray(u_strict, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    n = v.shape[-1]
    if u_strict.shape[-1] != n * (n - 1) // 2 or u_strict.shape[:-1] != v.shape[:-1]:
        raise DimensionError(
            f"triangular: need u of length {n * (n - 1) // 2} for diagonal of length {n}, "
            f"got u {u_strict.shape}, v {v.shape}")
    iu = np.triu_indices(n, 1)
    out = np.zeros(v.shape[:-1] + (n, n))
    out[..., iu[0], iu[1]] = u_strict
    out[..., iu[1], iu[0]] = u_strict
    d = np.arange(n)
    out[..., d, d] = v
    return out


def grad_triangular(g):
    g = _square(g, "g")
    n = g.shape[-1]
    iu = np.triu_indices(n, 1)
    du = g[..., iu[0], iu[1]] + g[..., iu[1], iu[0]]
    dv = np.diagonal(g, axis1=-2, axis2=-1).copy()
    return du, dv


def split_triangular(w):
    """Strict upper triangle and diagonal of ``w`` (inverse of build_triangular)."""
    w = _square(w)
    n = w.shape[-1]
    iu = np.triu_indices(n, 1)
    return w[..., iu[0], iu[1]].copy(), np.diagonal(w, axis1=-2, axis2=-1).copy()


# average ------------------------------------------------------------------

def build_average(w):
    w = _square(w)
    return (w + _swap(w)) / 2


def grad_average(g):
    g = _square(g, "g")
    return (g + _swap(g)) / 2


# eigen --------------------------------------------------------------------

def build_eigen(V, lam):
    V = np.asarray(V, dtype=np.float64)
    lam = np.asarray(lam, dtype=np.float64)
    if V.ndim < 2 or V.shape[-1] != lam.shape[-1] or V.shape[:-2] != lam.shape[:-1]:
        raise DimensionError(f"eigen: V {V.shape} and lambda {lam.shape} disagree")
    if V.shape[-1] > V.shape[-2]:
        raise DimensionError(f"eigen: rank {V.shape[-1]} exceeds order {V.shape[-2]}")
    return mirror_upper((V * lam[..., None, :]) @ _swap(V))


def grad_eigen(g, V, lam):
    g = _square(g, "g")
    V = np.asarray(V, dtype=np.float64)
    lam = np.asarray(lam, dtype=np.float64)
    if g.shape[-1] != V.shape[-2]:
        raise DimensionError(f"eigen: gradient {g.shape} does not match V {V.shape}")
    dV = ((g + _swap(g)) @ V) * lam[..., None, :]
    dlam = np.einsum("...ik,...ij,...jk->...k", V, g, V)
    return dV, dlam


def eigen_init(w, rank):
    """Eigenpairs of the symmetric part of ``w`` with the ``rank`` largest |lambda|."""
    s = build_average(w)
    lam, vec = np.linalg.eigh(s)
    order = np.argsort(-np.abs(lam), axis=-1, kind="stable")[..., :rank]
    lam_r = np.take_along_axis(lam, order, axis=-1)
    V = np.take_along_axis(vec, order[..., None, :], axis=-1)
    return V, lam_r


# LDL ----------------------------------------------------------------------

def unit_lower(l_strict, n):
    l_strict = np.asarray(l_strict, dtype=np.float64)
    if l_strict.shape[-1] != n * (n - 1) // 2:
        raise DimensionError(f"ldl: need {n * (n - 1) // 2} strict-lower values, got {l_strict.shape[-1]}")
    L = np.zeros(l_strict.shape[:-1] + (n, n))
    il = np.tril_indices(n, -1)
    L[..., il[0], il[1]] = l_strict
    d = np.arange(n)
    L[..., d, d] = 1.0
    return L


def build_ldl(l_strict, d):
    d = np.asarray(d, dtype=np.float64)
    n = d.shape[-1]
    L = unit_lower(l_strict, n)
    if L.shape[:-2] != d.shape[:-1]:
        raise DimensionError(f"ldl: batch shapes differ, l {L.shape[:-2]} vs d {d.shape[:-1]}")
    return mirror_upper((L * d[..., None, :]) @ _swap(L))


def grad_ldl(g, L, d):
    """Adjoint of build_ldl; ``L`` is the full unit-lower matrix."""
    g = _square(g, "g")
    d = np.asarray(d, dtype=np.float64)
    n = g.shape[-1]
    gs = g + _swap(g)
    dL = (gs @ L) * d[..., None, :]
    il = np.tril_indices(n, -1)
    dl = dL[..., il[0], il[1]]
    dd = np.einsum("...ik,...ij,...jk->...k", L, g, L)
    return dl, dd


def ldl_decompose(s):
    """Unpivoted LDL^T of a symmetric matrix: returns (l_strict, d).

    Raises ``np.linalg.LinAlgError`` on a zero pivot.
    """
    s = _square(s, "s")
    n = s.shape[-1]
    L = np.eye(n)
    d = np.zeros(n)
    for j in range(n):
        d[j] = s[j, j] - (L[j, :j] ** 2) @ d[:j]
        if d[j] == 0.0:
            raise np.linalg.LinAlgError(f"zero pivot at {j}")
        for i in range(j + 1, n):
            L[i, j] = (s[i, j] - (L[i, :j] * L[j, :j]) @ d[:j]) / d[j]
    il = np.tril_indices(n, -1)
    return L[il], d


# soft constraints ---------------------------------------------------------

def soft_symmetry_penalty(w, p=1, rho=1.0):
    """rho * ||vec(w) - vec(w^T)||_p and its subgradient.

    For stacked input the norm runs over the whole stack.  L2 is the plain
    (non-squared) norm; both norms take subgradient 0 where they kink.
    """
    w = _square(w)
    if p not in (1, 2):
        raise ValueError(f"p must be 1 or 2, got {p}")
    diff = w - _swap(w)
    if p == 1:
        return rho * float(np.abs(diff).sum()), 2.0 * rho * np.sign(diff)
    norm = float(np.sqrt((diff * diff).sum()))
    if norm == 0.0:
        return 0.0, np.zeros_like(w)
    return rho * norm, (2.0 * rho / norm) * diff


def asymmetry_norm(w, p=1):
    w = _square(w)
    diff = w - _swap(w)
    if p == 1:
        return float(np.abs(diff).sum())
    return float(np.sqrt((diff * diff).sum()))


def project_to_symmetric(w):
    """Keep the upper triangle (test-time conversion of a soft-constrained weight)."""
    w = _square(w)
    if w.ndim != 2:
        raise DimensionError("project_to_symmetric takes a single matrix")
    n = w.shape[0]
    return PackedSymmetric(n, w[np.triu_indices(n)])
