"""Symmetric reparameterizations of weight matrices and conv kernels."""
from .kinds import (
    AXES,
    KIND_NAMES,
    KernelSymmetry,
    Parameterization,
    SymmetryKind,
    apply_channelwise,
    apply_spatial,
    make_parameterization,
)
from .nway import (
    build_chunking,
    build_nway_blocking,
    build_nway_triangulizing,
    domain_size,
    nway_adjoint,
    triangulizing_count,
)
from .ops import (
    asymmetry_norm,
    build_average,
    build_eigen,
    build_ldl,
    build_triangular,
    eigen_init,
    grad_average,
    grad_eigen,
    grad_ldl,
    grad_triangular,
    ldl_decompose,
    project_to_symmetric,
    soft_symmetry_penalty,
    unit_lower,
)

__all__ = [
    "AXES", "KIND_NAMES", "KernelSymmetry", "Parameterization", "SymmetryKind",
    "apply_channelwise", "apply_spatial", "make_parameterization",
    "build_chunking", "build_nway_blocking", "build_nway_triangulizing",
    "domain_size", "nway_adjoint", "triangulizing_count",
    "asymmetry_norm", "build_average", "build_eigen", "build_ldl", "build_triangular",
    "eigen_init", "grad_average", "grad_eigen", "grad_ldl", "grad_triangular",
    "ldl_decompose", "project_to_symmetric", "soft_symmetry_penalty", "unit_lower",
]
