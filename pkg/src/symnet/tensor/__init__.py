"""Tensor core: dense matmul, im2col convolution, packed symmetric storage."""
from ._backend import BACKEND
from .core import (
    PackedSymmetric,
    conv2d,
    conv_output_size,
    im2col,
    matmul,
    pack_symmetric,
    packed_offset,
    packed_size,
    symm_packed,
    symv_packed,
    unpack,
)

__all__ = [
    "BACKEND",
    "PackedSymmetric",
    "conv2d",
    "conv_output_size",
    "im2col",
    "matmul",
    "pack_symmetric",
    "packed_offset",
    "packed_size",
    "symm_packed",
    "symv_packed",
    "unpack",
]
