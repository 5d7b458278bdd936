"""Self-check suite behind the ``check`` command.

Runs randomized gradient, invariant and kernel-equivalence checks and
returns one (name, passed, detail) row per check.
"""
import numpy as np

from .symmetry import KIND_NAMES, SymmetryKind, make_parameterization
from .tensor import conv2d, pack_symmetric, symm_packed, symv_packed, unpack

NWAY_CHOICES = {
    "nway_blocking": ((4, (2, 4, 6, 8)), (16, (4, 8))),
    "nway_triangulizing": ((2, range(2, 9)), (4, range(2, 9)), (8, range(2, 9))),
    "chunking": ((2, (2, 4, 6, 8)), (4, (4, 8)), (8, (8,))),
}


def random_kind(name, rng):
    """A SymmetryKind of family ``name`` and a compatible order n <= 8."""
    if name in NWAY_CHOICES:
        n_way, sizes = NWAY_CHOICES[name][rng.integers(len(NWAY_CHOICES[name]))]
        sizes = list(sizes)
        return SymmetryKind(name, n_way=n_way), int(sizes[rng.integers(len(sizes))])
    n = int(rng.integers(2, 9))
    if name == "soft":
        return SymmetryKind("soft", p=2, rho=1.0), n
    if name == "eigen":
        return SymmetryKind("eigen", rank=int(rng.integers(1, n + 1))), n
    return SymmetryKind(name), n


def adjoint_error(kind, n, rng, eps=1e-6):
    """Max relative error between adjoint(g) and central differences of <g, build(actual)>."""
    p = make_parameterization(kind, n)
    actual = p.init(rng.normal(size=(n, n)), rng)
    actual = {k: rng.normal(size=v.shape) for k, v in actual.items()}
    g = rng.normal(size=(n, n))
    ana = p.adjoint(actual, g)
    worst = 0.0
    for k, v in actual.items():
        num = np.zeros_like(v)
        for idx in np.ndindex(*v.shape):
            old = v[idx]
            v[idx] = old + eps
            fp = float((g * p.build(actual)).sum())
            v[idx] = old - eps
            fm = float((g * p.build(actual)).sum())
            v[idx] = old
            num[idx] = (fp - fm) / (2 * eps)
        scale = max(1e-8, np.abs(num).max(), np.abs(ana[k]).max())
        worst = max(worst, float(np.abs(num - ana[k]).max() / scale))
    return worst


def invariant_ok(kind, n, rng):
    p = make_parameterization(kind, n)
    actual = {k: rng.normal(size=v.shape) for k, v in p.init(rng.normal(size=(n, n)), rng).items()}
    W = p.build(actual)
    if kind.name in ("none", "soft"):
        return True
    if kind.name == "chunking":
        c = n // kind.n_way
        return all(np.array_equal(W[:, :c], W[:, j * c:(j + 1) * c]) for j in range(kind.n_way))
    if kind.name == "nway_blocking":
        return np.array_equal(W, W[::-1]) and np.array_equal(W, W[:, ::-1])
    ok = np.array_equal(W, W.T)
    if kind.name == "nway_triangulizing" and kind.n_way >= 4:
        ok &= np.array_equal(W, W[::-1, ::-1].T)
    if kind.name == "nway_triangulizing" and kind.n_way == 8:
        ok &= np.array_equal(W, W[:, ::-1])
    return bool(ok)


def direct_conv(x, w, stride, pad):
    B, C, H, Wd = x.shape
    O, _, k, _ = w.shape
    xp = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
    ho = (H + 2 * pad - k) // stride + 1
    wo = (Wd + 2 * pad - k) // stride + 1
    out = np.zeros((B, O, ho, wo))
    for i in range(ho):
        for j in range(wo):
            patch = xp[:, :, i * stride:i * stride + k, j * stride:j * stride + k]
            out[:, :, i, j] = np.einsum("bckl,ockl->bo", patch, w)
    return out


def run_checks(trials=100, seed=0):
    rng = np.random.default_rng(seed)
    rows = []
    for name in KIND_NAMES:
        worst = 0.0
        for _ in range(trials):
            kind, n = random_kind(name, rng)
            worst = max(worst, adjoint_error(kind, n, rng))
        rows.append((f"adjoint {name}", worst <= 1e-5, f"max rel err {worst:.2e} over {trials} trials"))
    bad = 0
    for _ in range(10 * trials):
        name = KIND_NAMES[1 + rng.integers(len(KIND_NAMES) - 1)]
        kind, n = random_kind(name, rng)
        bad += not invariant_ok(kind, n, rng)
    rows.append(("build invariants", bad == 0, f"{bad} violations in {10 * trials} trials"))
    worst = 0.0
    for _ in range(10 * trials):
        n = int(rng.integers(1, 12))
        a = rng.normal(size=(n, n))
        p = pack_symmetric(np.triu(a) + np.triu(a, 1).T)
        S = unpack(p)
        x = rng.normal(size=n)
        b = rng.normal(size=(n, int(rng.integers(1, 5))))
        worst = max(worst, np.abs(symv_packed(p, x) - S @ x).max(), np.abs(symm_packed(p, b) - S @ b).max())
    rows.append(("packed kernels", worst <= 1e-12, f"max abs diff {worst:.2e}"))
    worst = 0.0
    for _ in range(max(1, trials // 10)):
        k = int(rng.choice([1, 3]))
        x = rng.normal(size=(2, 3, 6, 6))
        w = rng.normal(size=(4, 3, k, k))
        worst = max(worst, np.abs(conv2d(x, w, 1, k // 2) - direct_conv(x, w, 1, k // 2)).max())
    rows.append(("conv2d vs direct", worst <= 1e-10, f"max abs diff {worst:.2e}"))
    return rows
