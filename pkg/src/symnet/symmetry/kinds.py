"""Symmetry kinds and the parameterization objects that realize them.

A parameterization maps a dict of *actual* arrays (the free parameters,
batched over leading axes) to a stack of constructed n x n matrices, and
maps gradients back.  ``apply_channelwise``/``apply_spatial`` lay the stack
out inside a 4-D convolution kernel.
"""
from dataclasses import dataclass, field

import numpy as np

from ..errors import ConfigError, DimensionError, UnsupportedLayerError
from . import nway, ops

KIND_NAMES = (
    "none", "soft", "triangular", "average", "eigen", "ldl",
    "nway_blocking", "nway_triangulizing", "chunking",
)
AXES = ("channelwise", "spatial", "both")
NWAY_KINDS = ("nway_blocking", "nway_triangulizing", "chunking")


@dataclass(frozen=True)
class SymmetryKind:
    name: str = "none"
    p: int = 1
    rho: float = 0.0
    rank: int | None = None
    n_way: int | None = None

    def __post_init__(self):
        if self.name not in KIND_NAMES:
            raise ConfigError(f"unknown symmetry kind {self.name!r}; expected one of {KIND_NAMES}", "symmetry.kind")
        if self.name == "soft":
            if self.p not in (1, 2):
                raise ConfigError(f"soft penalty norm must be 1 or 2, got {self.p}", "symmetry.p")
            if self.rho < 0:
                raise ConfigError(f"rho must be >= 0, got {self.rho}", "symmetry.rho")
        if self.name == "eigen" and self.rank is not None and self.rank < 1:
            raise ConfigError(f"eigen rank must be positive, got {self.rank}", "symmetry.rank")
        if self.name in NWAY_KINDS:
            allowed = {
                "nway_blocking": nway.BLOCKING_WAYS,
                "nway_triangulizing": nway.TRIANGULIZING_WAYS,
                "chunking": nway.CHUNKING_WAYS,
            }[self.name]
            if self.n_way not in allowed:
                raise ConfigError(f"{self.name} supports N in {allowed}, got {self.n_way}", "symmetry.n_way")

    @property
    def is_hard(self):
        return self.name not in ("none", "soft")

    def label(self):
        if self.name in NWAY_KINDS:
            return f"{self.name}-{self.n_way}"
        if self.name == "soft":
            return f"soft-L{self.p}-rho{self.rho:g}"
        if self.name == "eigen" and self.rank:
            return f"eigen-r{self.rank}"
        return self.name


class Parameterization:
    """Dense identity parameterization; base class for the others."""

    names = ("w",)
    # parameters exempt from the test-phase saving (all symmetric kinds save)
    symmetric = False

    def __init__(self, kind, n):
        self.kind = kind
        self.n = n

    def init(self, dense, rng):
        return {"w": np.array(dense, dtype=np.float64)}

    def build(self, actual):
        return actual["w"]

    def adjoint(self, actual, g):
        return {"w": g}

    def count(self, phase):
        return self.n * self.n

    def lr_scales(self, has_bn):
        return {name: 1.0 for name in self.names}

    def from_constructed(self, w):
        """Actual weights that rebuild ``w`` exactly, or None if not invertible."""
        return {"w": np.array(w, dtype=np.float64)}


class Soft(Parameterization):
    symmetric = True

    def count(self, phase):
        n = self.n
        return n * n if phase == "train" else n * (n + 1) // 2

    def penalty(self, actual):
        return ops.soft_symmetry_penalty(actual["w"], self.kind.p, self.kind.rho)


class Triangular(Parameterization):
    names = ("u", "v")
    symmetric = True

    def init(self, dense, rng):
        u, v = ops.split_triangular(dense)
        return {"u": u, "v": v}

    def build(self, actual):
        return ops.build_triangular(actual["u"], actual["v"])

    def adjoint(self, actual, g):
        du, dv = ops.grad_triangular(g)
        return {"u": du, "v": dv}

    def count(self, phase):
        return self.n * (self.n + 1) // 2

    def lr_scales(self, has_bn):
        # the shared off-diagonal sees a doubled gradient; without BN halve its step
        return {"u": 1.0 if has_bn else 0.5, "v": 1.0}

    def from_constructed(self, w):
        u, v = ops.split_triangular(w)
        return {"u": u, "v": v}


class Average(Parameterization):
    symmetric = True

    def build(self, actual):
        return ops.build_average(actual["w"])

    def adjoint(self, actual, g):
        return {"w": ops.grad_average(g)}

    def count(self, phase):
        n = self.n
        return n * n if phase == "train" else n * (n + 1) // 2


class Eigen(Parameterization):
    names = ("V", "lam")
    symmetric = True

    def __init__(self, kind, n):
        super().__init__(kind, n)
        self.rank = kind.rank if kind.rank else max(1, n // 2)
        if self.rank > n:
            raise DimensionError(f"eigen rank {self.rank} exceeds order {n}")

    def init(self, dense, rng):
        V, lam = ops.eigen_init(dense, self.rank)
        return {"V": V, "lam": lam}

    def build(self, actual):
        return ops.build_eigen(actual["V"], actual["lam"])

    def adjoint(self, actual, g):
        dV, dlam = ops.grad_eigen(g, actual["V"], actual["lam"])
        return {"V": dV, "lam": dlam}

    def count(self, phase):
        n = self.n
        return n * (self.rank + 1) if phase == "train" else n * (n + 1) // 2

    def from_constructed(self, w):
        return None


class LDL(Parameterization):
    names = ("l", "d")
    symmetric = True

    def init(self, dense, rng):
        # l ~ N(0, 1/n), d ~ N(0, 3n/4 * var(dense)): constructed off-diagonal
        # entries then have on average the variance of the dense draw
        n = self.n
        batch = dense.shape[:-2]
        sigma = float(np.std(dense)) if dense.size else 0.0
        rng = np.random.default_rng() if rng is None else rng
        l = rng.normal(0.0, 1.0 / np.sqrt(n), size=batch + (n * (n - 1) // 2,))
        d = rng.normal(0.0, sigma * np.sqrt(0.75 * n), size=batch + (n,))
        return {"l": l, "d": d}

    def build(self, actual):
        return ops.build_ldl(actual["l"], actual["d"])

    def adjoint(self, actual, g):
        L = ops.unit_lower(actual["l"], self.n)
        dl, dd = ops.grad_ldl(g, L, actual["d"])
        return {"l": dl, "d": dd}

    def count(self, phase):
        return self.n * (self.n + 1) // 2

    def from_constructed(self, w):
        return None


class NWay(Parameterization):
    names = ("V",)

    def __init__(self, kind, n):
        super().__init__(kind, n)
        self.n_way = kind.n_way
        self.idx = nway.nway_index(kind.name, n, self.n_way)
        self.vshape = nway.domain_shape(kind.name, n, self.n_way)
        _, self._first = np.unique(self.idx.ravel(), return_index=True)
        # chunking is plain sharing, not a symmetry
        self.symmetric = kind.name != "chunking"

    def init(self, dense, rng):
        return self.from_constructed(dense)

    def build(self, actual):
        V = actual["V"]
        flat = V.reshape(V.shape[:V.ndim - len(self.vshape)] + (-1,))
        return flat[..., self.idx]

    def adjoint(self, actual, g):
        return {"V": nway.nway_adjoint(self.kind.name, g, self.n_way)}

    def count(self, phase):
        return int(np.prod(self.vshape))

    def from_constructed(self, w):
        w = np.asarray(w, dtype=np.float64)
        flat = w.reshape(w.shape[:-2] + (-1,))
        return {"V": flat[..., self._first].reshape(w.shape[:-2] + self.vshape)}


_CLASSES = {
    "none": Parameterization,
    "soft": Soft,
    "triangular": Triangular,
    "average": Average,
    "eigen": Eigen,
    "ldl": LDL,
    "nway_blocking": NWay,
    "nway_triangulizing": NWay,
    "chunking": NWay,
}


def make_parameterization(kind, n):
    if isinstance(kind, str):
        kind = SymmetryKind(kind)
    return _CLASSES[kind.name](kind, n)


# layout inside 4-D kernels ----------------------------------------------------

@dataclass
class KernelSymmetry:
    """A parameterization laid out on an (N_out, N_in, K, K) kernel.

    ``axis`` picks the slices: channelwise -> the K*K channel matrices,
    spatial -> the N_out*N_in spatial matrices, both -> channelwise matrices
    whose spatial arrangement is itself symmetric.
    """

    kind: SymmetryKind
    axis: str
    shape: tuple
    param: Parameterization = field(init=False)

    def __post_init__(self):
        if self.axis not in AXES:
            raise ConfigError(f"unknown symmetry axis {self.axis!r}; expected one of {AXES}", "symmetry.axis")
        self.shape = tuple(self.shape)
        if len(self.shape) == 2:
            n_out, n_in = self.shape
            k = 1
            if self.axis != "channelwise":
                raise UnsupportedLayerError(f"{self.axis} symmetry needs a convolution kernel, got shape {self.shape}")
        else:
            n_out, n_in, k, kw = self.shape
            if k != kw and self.axis != "channelwise":
                raise UnsupportedLayerError(f"spatial symmetry needs square kernels, got {k}x{kw}")
        if self.axis in ("channelwise", "both") and n_out != n_in:
            raise UnsupportedLayerError(
                f"channel-wise symmetry needs N_in == N_out, got {n_in} -> {n_out}")
        self.k = k
        order = k if self.axis == "spatial" else n_out
        self.param = make_parameterization(self.kind, order)
        self.averaged_both = self.axis == "both" and self.kind.name in ("average", "soft")
        if self.axis == "both":
            self.sidx = nway.triangulizing_index(k, 2)
            _, self._sfirst = np.unique(self.sidx.ravel(), return_index=True)

    # stack <-> kernel layout
    def _to_stack(self, w):
        if len(self.shape) == 2 or self.axis == "spatial":
            return w
        return w.transpose(2, 3, 0, 1)

    def _from_stack(self, s):
        if len(self.shape) == 2 or self.axis == "spatial":
            return s
        return s.transpose(2, 3, 0, 1)

    def _tie_spatial(self, stack):
        # (K, K, ...) -> (P, ...), P = K(K+1)/2, keeping the upper spatial triangle
        r, c = np.unravel_index(self._sfirst, (self.k, self.k))
        return stack[r, c]

    def _untie_spatial(self, packed):
        return packed[self.sidx]

    def _scatter_spatial(self, g):
        P = len(self._sfirst)
        out = np.zeros((P,) + g.shape[2:])
        np.add.at(out, self.sidx.ravel(), g.reshape((-1,) + g.shape[2:]))
        return out

    def init(self, dense, rng):
        dense = np.asarray(dense, dtype=np.float64)
        if dense.shape != self.shape:
            raise DimensionError(f"init weight shape {dense.shape} != {self.shape}")
        if self.averaged_both:
            return {"w": dense.copy()}
        stack = self._to_stack(dense)
        if self.axis == "both":
            stack = self._tie_spatial(stack)
        return self.param.init(stack, rng)

    def build(self, actual):
        if self.averaged_both:
            w = actual["w"]
            if self.kind.name == "soft":
                return w
            w = ops.build_average(w.transpose(2, 3, 0, 1)).transpose(2, 3, 0, 1)
            return ops.build_average(w)
        stack = self.param.build(actual)
        if self.axis == "both":
            stack = self._untie_spatial(stack)
        return self._from_stack(stack)

    def adjoint(self, actual, g):
        g = np.asarray(g, dtype=np.float64)
        if self.averaged_both:
            if self.kind.name == "soft":
                return {"w": g}
            g = ops.grad_average(g)
            return {"w": ops.grad_average(g.transpose(2, 3, 0, 1)).transpose(2, 3, 0, 1)}
        stack = self._to_stack(g)
        if self.axis == "both":
            stack = self._scatter_spatial(stack)
        return self.param.adjoint(actual, stack)

    def penalty(self, actual):
        """Soft penalty over the layer's symmetric slices: (value, grad)."""
        if self.kind.name != "soft" or self.kind.rho == 0:
            return 0.0, None
        w = actual["w"]
        if self.axis == "both":
            v1, g1 = ops.soft_symmetry_penalty(w.transpose(2, 3, 0, 1), self.kind.p, self.kind.rho)
            v2, g2 = ops.soft_symmetry_penalty(w, self.kind.p, self.kind.rho)
            return v1 + v2, g1.transpose(2, 3, 0, 1) + g2
        # actual "w" is already in stack layout; the grad goes back in kernel layout
        v, g = ops.soft_symmetry_penalty(w, self.kind.p, self.kind.rho)
        return v, self._from_stack(g)

    def asymmetry(self, actual, p=1):
        w = actual["w"]
        if self.axis == "both":
            return ops.asymmetry_norm(w.transpose(2, 3, 0, 1), p) + ops.asymmetry_norm(w, p)
        return ops.asymmetry_norm(w, p)

    def n_slices(self):
        if len(self.shape) == 2:
            return 1
        n_out, n_in, k, _ = self.shape
        if self.axis == "spatial":
            return n_out * n_in
        if self.axis == "both":
            return k * (k + 1) // 2
        return self.shape[2] * self.shape[3]

    def count(self, phase):
        if self.averaged_both:
            n = self.shape[0]
            k = self.k
            if phase == "train":
                return int(np.prod(self.shape))
            return (n * (n + 1) // 2) * (k * (k + 1) // 2)
        return self.n_slices() * self.param.count(phase)

    def actual_shapes(self):
        return {k: v.shape for k, v in self.init(np.zeros(self.shape), None).items()}

    def lr_scales(self, has_bn):
        if self.averaged_both:
            return {"w": 1.0}
        return self.param.lr_scales(has_bn)

    def from_constructed(self, w):
        if self.averaged_both:
            return {"w": np.array(w, dtype=np.float64)}
        stack = self._to_stack(np.asarray(w, dtype=np.float64))
        if self.axis == "both":
            stack = self._tie_spatial(stack)
        return self.param.from_constructed(stack)

    @property
    def names(self):
        return ("w",) if self.averaged_both else self.param.names


def apply_channelwise(kind, actual, shape):
    """Construct an N x N x K x K kernel whose channel slices are symmetric."""
    return KernelSymmetry(_as_kind(kind), "channelwise", shape).build(actual)


def apply_spatial(kind, actual, shape):
    """Construct a kernel whose K x K spatial slices are symmetric."""
    return KernelSymmetry(_as_kind(kind), "spatial", shape).build(actual)


def _as_kind(kind):
    return SymmetryKind(kind) if isinstance(kind, str) else kind
