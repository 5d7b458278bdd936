import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from symnet.errors import AsymmetryError, DimensionError
from symnet.tensor import (
    PackedSymmetric, conv2d, im2col, matmul, pack_symmetric, packed_offset,
    symm_packed, symv_packed, unpack,
)
from symnet.tensor import _backend

from oracles import direct_conv2d, naive_matmul, sliding_window_gather

BACKENDS = ["python"] + (["compiled"] if _backend.compiled is not None else [])


def test_matmul_identity():
    np.testing.assert_array_equal(matmul(np.eye(2), [[1, 2], [3, 4]]), [[1, 2], [3, 4]])


def test_matmul_column_selection():
    np.testing.assert_array_equal(matmul([[1, 2], [3, 4]], [[0], [1]]), [[2], [4]])


def test_matmul_matches_triple_loop():
    rng = np.random.default_rng(1)
    a, b = rng.normal(size=(5, 7)), rng.normal(size=(7, 3))
    np.testing.assert_allclose(matmul(a, b), naive_matmul(a, b), atol=1e-12, rtol=0)


def test_matmul_shape_mismatch():
    with pytest.raises(DimensionError):
        matmul(np.ones((2, 3)), np.ones((2, 3)))


@pytest.mark.skipif(_backend.compiled is None, reason="extension not built")
def test_matmul_backends_agree_bitwise():
    rng = np.random.default_rng(2)
    a, b = rng.normal(size=(13, 29)), rng.normal(size=(29, 11))
    assert np.array_equal(_backend.get("compiled").matmul(a, b), _backend.get("python").matmul(a, b))


def test_pack_direct_layout():
    p = pack_symmetric([[5, 2], [2, 6]], tol=0)
    np.testing.assert_array_equal(p.data, [5, 2, 6])


def test_pack_rejects_asymmetry_with_location():
    with pytest.raises(AsymmetryError) as err:
        pack_symmetric([[1, 2], [3, 4]], tol=0.5)
    assert err.value.deviation == 1.0
    assert err.value.index == (0, 1)


def test_pack_length_n64():
    rng = np.random.default_rng(3)
    s = rng.normal(size=(64, 64))
    assert pack_symmetric(s + s.T).data.size == 2080


def test_packed_offset_formula():
    n = 7
    p = pack_symmetric(np.arange(49.0).reshape(7, 7) + np.arange(49.0).reshape(7, 7).T)
    full = unpack(p)
    for i in range(n):
        for j in range(i, n):
            assert p.data[packed_offset(i, j, n)] == full[i, j]
            assert p[j, i] == full[i, j]


def test_packed_buffer_is_read_only():
    p = pack_symmetric(np.eye(3))
    with pytest.raises(ValueError):
        p.data[0] = 5.0


def test_packed_wrong_length():
    with pytest.raises(DimensionError):
        PackedSymmetric(3, np.zeros(5))


@settings(max_examples=60, deadline=None)
@given(n=st.integers(1, 24), seed=st.integers(0, 2**31))
def test_pack_unpack_round_trip_bitwise(n, seed):
    s = np.random.default_rng(seed).normal(size=(n, n))
    s = s + s.T
    assert np.array_equal(unpack(pack_symmetric(s)), s)


@pytest.mark.parametrize("backend", BACKENDS)
def test_symv_hand_product(backend):
    p = PackedSymmetric(2, [5, 2, 6])
    np.testing.assert_array_equal(symv_packed(p, [1, 1], backend=backend), [7, 8])


@pytest.mark.parametrize("backend", BACKENDS)
def test_symv_zero_vector(backend):
    rng = np.random.default_rng(4)
    s = rng.normal(size=(9, 9))
    assert not symv_packed(pack_symmetric(s + s.T), np.zeros(9), backend=backend).any()


@pytest.mark.parametrize("backend", BACKENDS)
def test_symv_n33_matches_dense(backend):
    rng = np.random.default_rng(5)
    s = rng.normal(size=(33, 33))
    s = s + s.T
    x = rng.normal(size=33)
    p = pack_symmetric(s)
    np.testing.assert_allclose(symv_packed(p, x, backend=backend), matmul(unpack(p), x[:, None])[:, 0],
                               atol=1e-12, rtol=0)


def test_symv_length_mismatch():
    with pytest.raises(DimensionError):
        symv_packed(PackedSymmetric(2, [1, 2, 3]), np.ones(3))


@pytest.mark.parametrize("backend", BACKENDS)
def test_symm_identity(backend):
    p = PackedSymmetric(2, [5, 2, 6])
    np.testing.assert_array_equal(symm_packed(p, np.eye(2), backend=backend), [[5, 2], [2, 6]])


@pytest.mark.parametrize("backend", BACKENDS)
def test_symm_single_column_is_symv(backend):
    rng = np.random.default_rng(6)
    s = rng.normal(size=(8, 8))
    p = pack_symmetric(s + s.T)
    x = rng.normal(size=8)
    np.testing.assert_allclose(symm_packed(p, x[:, None], backend=backend)[:, 0],
                               symv_packed(p, x, backend=backend), atol=1e-15)


@pytest.mark.parametrize("backend", BACKENDS)
def test_symm_n16_m9_matches_dense(backend):
    rng = np.random.default_rng(7)
    s = rng.normal(size=(16, 16))
    p = pack_symmetric(s + s.T)
    b = rng.normal(size=(16, 9))
    np.testing.assert_allclose(symm_packed(p, b, backend=backend), matmul(unpack(p), b), atol=1e-12, rtol=0)


def test_symm_row_mismatch():
    with pytest.raises(DimensionError):
        symm_packed(PackedSymmetric(2, [1, 2, 3]), np.ones((3, 2)))


@pytest.mark.parametrize("backend", BACKENDS)
def test_im2col_single_field(backend):
    x = np.arange(4.0).reshape(1, 2, 2)
    np.testing.assert_array_equal(im2col(x, 2, 1, 0, backend=backend), [[0], [1], [2], [3]])


@pytest.mark.parametrize("backend", BACKENDS)
def test_im2col_zero_input(backend):
    assert not im2col(np.zeros((2, 4, 4)), 3, 1, 1, backend=backend).any()


@pytest.mark.parametrize("backend", BACKENDS)
def test_im2col_strided_padded_matches_gather(backend):
    x = np.random.default_rng(8).normal(size=(3, 5, 5))
    np.testing.assert_array_equal(im2col(x, 3, 2, 1, backend=backend), sliding_window_gather(x, 3, 2, 1))


def test_im2col_non_integral_output():
    with pytest.raises(DimensionError):
        im2col(np.zeros((1, 4, 4)), 3, 2, 0)


def test_conv2d_scalar_kernel_doubles():
    x = np.random.default_rng(9).normal(size=(1, 1, 3, 3))
    np.testing.assert_array_equal(conv2d(x, np.full((1, 1, 1, 1), 2.0)), 2 * x)


def test_conv2d_zero_weight():
    x = np.random.default_rng(10).normal(size=(1, 2, 4, 4))
    assert not conv2d(x, np.zeros((3, 2, 3, 3)), 1, 1).any()


def test_conv2d_matches_direct():
    rng = np.random.default_rng(11)
    x = rng.normal(size=(2, 3, 8, 8))
    w = rng.normal(size=(4, 3, 3, 3))
    np.testing.assert_allclose(conv2d(x, w, 1, 1), direct_conv2d(x, w, 1, 1), atol=1e-10, rtol=0)


def test_conv2d_channel_mismatch():
    with pytest.raises(DimensionError):
        conv2d(np.zeros((1, 2, 4, 4)), np.zeros((1, 3, 3, 3)))


def test_operations_are_pure():
    rng = np.random.default_rng(12)
    a = rng.normal(size=(6, 6))
    s = a + a.T
    before = s.copy()
    p = pack_symmetric(s)
    x = rng.normal(size=6)
    y1, y2 = symv_packed(p, x), symv_packed(p, x)
    assert np.array_equal(y1, y2)
    assert np.array_equal(s, before)
    assert np.array_equal(matmul(a, s), matmul(a, s))
