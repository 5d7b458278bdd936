"""N-way symmetries as gather maps from a fundamental domain.

Each construction is an integer map ``idx`` of shape (M, M) into the
flattened fundamental domain ``V``: ``W = V.ravel()[idx]``.  The adjoint is
the scatter-add of the upstream gradient over each orbit.
"""
from functools import lru_cache

import numpy as np

from ..errors import DimensionError

BLOCKING_WAYS = (4, 16)
TRIANGULIZING_WAYS = (2, 4, 8)
CHUNKING_WAYS = (1, 2, 4, 8, 16, 32, 64)


def _flip_index(M):
    # bottom-right (M/2)^2 block mirrored to the other three quadrants
    h = M // 2
    r = np.arange(M)
    return np.where(r >= h, r - h, h - 1 - r)


@lru_cache(maxsize=None)
def blocking_index(M, n_way):
    if n_way not in BLOCKING_WAYS:
        raise ValueError(f"blocking supports N in {BLOCKING_WAYS}, got {n_way}")
    root = 2 if n_way == 4 else 4
    if M % root:
        raise DimensionError(f"{n_way}-way blocking needs M divisible by {root}, got M={M}")
    rows = np.arange(M)
    size = M
    for _ in range(root // 2):
        rows = _flip_index(size)[rows]
        size //= 2
    m = M // root
    idx = rows[:, None] * m + rows[None, :]
    idx.flags.writeable = False
    return idx


def _tri_generators(M, n_way):
    diag = lambda i, j: (j, i)
    anti = lambda i, j: (M - 1 - j, M - 1 - i)
    vert = lambda i, j: (i, M - 1 - j)
    return {2: [diag], 4: [diag, anti], 8: [diag, anti, vert]}[n_way]


def _tri_in_domain(M, n_way, i, j):
    if n_way == 2:
        return i <= j
    if n_way == 4:
        return i <= j and i + j <= M - 1
    return i <= j <= (M - 1) // 2


@lru_cache(maxsize=None)
def triangulizing_domain(M, n_way):
    """Fundamental-domain cells in row-major order, as (rows, cols)."""
    if n_way not in TRIANGULIZING_WAYS:
        raise ValueError(f"triangulizing supports N in {TRIANGULIZING_WAYS}, got {n_way}")
    cells = [(i, j) for i in range(M) for j in range(M) if _tri_in_domain(M, n_way, i, j)]
    return tuple(c[0] for c in cells), tuple(c[1] for c in cells)


@lru_cache(maxsize=None)
def triangulizing_index(M, n_way):
    rows, cols = triangulizing_domain(M, n_way)
    pos = {cell: k for k, cell in enumerate(zip(rows, cols))}
    gens = _tri_generators(M, n_way)
    idx = np.full((M, M), -1, dtype=np.intp)
    for i in range(M):
        for j in range(M):
            if idx[i, j] >= 0:
                continue
            orbit = {(i, j)}
            frontier = [(i, j)]
            while frontier:
                c = frontier.pop()
                for g in gens:
                    nxt = g(*c)
                    if nxt not in orbit:
                        orbit.add(nxt)
                        frontier.append(nxt)
            reps = [c for c in orbit if c in pos]
            if len(reps) != 1:
                raise AssertionError(f"orbit of {(i, j)} meets the domain {len(reps)} times")
            for c in orbit:
                idx[c] = pos[reps[0]]
    idx.flags.writeable = False
    return idx


@lru_cache(maxsize=None)
def chunking_index(M, n_way):
    if n_way < 1 or n_way & (n_way - 1) or n_way > 64:
        raise ValueError(f"chunking N must be a power of two <= 64, got {n_way}")
    if M % n_way:
        raise DimensionError(f"chunking needs M divisible by N, got M={M}, N={n_way}")
    w = M // n_way
    r = np.arange(M)
    idx = r[:, None] * w + (r[None, :] % w)
    idx.flags.writeable = False
    return idx


def domain_shape(kind, M, n_way):
    """Shape of the fundamental-domain tensor V for one M x M matrix."""
    if kind == "nway_blocking":
        return (M // (2 if n_way == 4 else 4),) * 2
    if kind == "chunking":
        return (M, M // n_way)
    return (len(triangulizing_domain(M, n_way)[0]),)


def domain_size(kind, M, n_way):
    return int(np.prod(domain_shape(kind, M, n_way)))


def nway_index(kind, M, n_way):
    if kind == "nway_blocking":
        return blocking_index(M, n_way)
    if kind == "nway_triangulizing":
        return triangulizing_index(M, n_way)
    if kind == "chunking":
        return chunking_index(M, n_way)
    raise ValueError(f"not an N-way kind: {kind!r}")


def triangulizing_count(M, n_way):
    """Closed-form orbit count (Burnside) for the triangulizing groups."""
    odd = M % 2
    if n_way == 2:
        return M * (M + 1) // 2
    if n_way == 4:
        return (M * M + 2 * M + odd) // 4
    # dihedral group of the square: identity, 2 diagonal mirrors, 2 axis mirrors, 3 rotations
    return (M * M + 2 * M + 2 * M * odd + 3 * odd) // 8


def _build(V, idx, vshape):
    V = np.asarray(V, dtype=np.float64)
    k = len(vshape)
    if V.shape[V.ndim - k:] != vshape:
        raise DimensionError(f"fundamental domain must have trailing shape {vshape}, got {V.shape}")
    flat = V.reshape(V.shape[:V.ndim - k] + (-1,))
    return flat[..., idx]


def build_nway_blocking(V, n_way, M=None):
    V = np.asarray(V, dtype=np.float64)
    root = 2 if n_way == 4 else 4
    if M is None:
        M = V.shape[-1] * root
    return _build(V, blocking_index(M, n_way), domain_shape("nway_blocking", M, n_way))


def build_nway_triangulizing(V, n_way, M):
    return _build(V, triangulizing_index(M, n_way), domain_shape("nway_triangulizing", M, n_way))


def build_chunking(V, n_way):
    V = np.asarray(V, dtype=np.float64)
    M = V.shape[-2]
    return _build(V, chunking_index(M, n_way), domain_shape("chunking", M, n_way))


def nway_adjoint(kind, g, n_way):
    """Sum the gradient over each orbit; returns dV shaped like the domain."""
    g = np.asarray(g, dtype=np.float64)
    M = g.shape[-1]
    if g.ndim < 2 or g.shape[-2] != M:
        raise DimensionError(f"gradient must be square, got {g.shape}")
    idx = nway_index(kind, M, n_way)
    vshape = domain_shape(kind, M, n_way)
    size = int(np.prod(vshape))
    batch = g.shape[:-2]
    g2 = g.reshape((-1, M * M))
    out = np.zeros((size, g2.shape[0]))
    np.add.at(out, idx.ravel(), g2.T)
    return out.T.reshape(batch + vshape)
