from dataclasses import dataclass, field

import numpy as np

from ..errors import ConfigError
from ..symmetry import KernelSymmetry, SymmetryKind
from ..symmetry.ops import mirror_upper


@dataclass(eq=False)
class ParamGroup:
    """A learnable array plus its update metadata."""

    name: str
    value: np.ndarray
    lr_scale: float = 1.0
    weight_decay: bool = True
    _grad: np.ndarray = field(default=None, repr=False)

    def __post_init__(self):
        self.value = np.asarray(self.value, dtype=np.float64)
        if not self.lr_scale > 0:
            raise ConfigError(f"lr_scale must be positive, got {self.lr_scale}", self.name)

    # gradient buffer is allocated on first use, so count-only models stay cheap
    @property
    def grad(self):
        if self._grad is None:
            self._grad = np.zeros_like(self.value)
        return self._grad

    @grad.setter
    def grad(self, g):
        self._grad = g

    def zero_grad(self):
        self._grad = None

    @property
    def size(self):
        return self.value.size


class DenseWeight:
    """An unconstrained weight: its value is its only parameter."""

    symmetric = False

    def __init__(self, name, value, weight_decay=True):
        self.name = name
        self.group = ParamGroup(f"{name}.w", value, weight_decay=weight_decay)
        self.shape = self.group.value.shape

    @property
    def groups(self):
        return [self.group]

    def value(self):
        return self.group.value

    def accumulate(self, g):
        self.group.grad += g

    def penalty(self):
        return 0.0, None

    def count(self, phase):
        return self.group.size


class SymmetricWeight:
    """A weight whose dense value is always constructed from actual weights.

    The constructed tensor is rebuilt on every ``value()`` call, so it can
    never drift from its parameterization.  ``freeze`` installs a constructed
    tensor read from a test-phase checkpoint; a frozen weight cannot train.
    """

    symmetric = True

    def __init__(self, name, shape, kind, axis, dense_init, rng, has_bn=True):
        if isinstance(kind, str):
            kind = SymmetryKind(kind)
        self.name = name
        self.shape = tuple(shape)
        self.kind = kind
        self.axis = axis
        self.sym = KernelSymmetry(kind, axis, self.shape)
        actual = self.sym.init(dense_init, rng)
        scales = self.sym.lr_scales(has_bn)
        self.groups_by_name = {
            k: ParamGroup(f"{name}.{k}", v, lr_scale=scales[k]) for k, v in actual.items()
        }
        self.frozen = None

    @property
    def groups(self):
        return list(self.groups_by_name.values())

    def actual(self):
        return {k: g.value for k, g in self.groups_by_name.items()}

    def value(self):
        if self.frozen is not None:
            return self.frozen
        return self.sym.build(self.actual())

    def accumulate(self, g):
        if self.frozen is not None:
            raise RuntimeError(f"{self.name} holds a frozen test-phase weight and cannot be trained")
        for k, dv in self.sym.adjoint(self.actual(), g).items():
            self.groups_by_name[k].grad += dv

    def penalty(self):
        """(value, grad w.r.t. the dense weight) of the soft constraint, if any."""
        return self.sym.penalty(self.actual())

    def asymmetry(self, p=1):
        if self.kind.name != "soft":
            return 0.0
        return self.sym.asymmetry(self.actual(), p)

    def count(self, phase):
        return self.sym.count(phase)

    def project_upper(self):
        """Soft kinds only: overwrite the weight with its upper-triangle symmetrization."""
        g = self.groups_by_name["w"]
        if self.sym.averaged_both:
            w = mirror_upper(g.value.transpose(2, 3, 0, 1)).transpose(2, 3, 0, 1)
            g.value = np.ascontiguousarray(mirror_upper(w))
        else:
            g.value = mirror_upper(g.value)

    def set_constructed(self, w):
        """Load a constructed tensor: exact actual weights when invertible, else freeze."""
        actual = self.sym.from_constructed(w)
        if actual is None:
            self.frozen = np.array(w, dtype=np.float64)
            return
        self.frozen = None
        for k, v in actual.items():
            self.groups_by_name[k].value = v


def make_weight(name, shape, spec_kind, axis, dense_init, rng, has_bn=True):
    if spec_kind is None or spec_kind.name == "none":
        return DenseWeight(name, dense_init)
    return SymmetricWeight(name, shape, spec_kind, axis, dense_init, rng, has_bn)
