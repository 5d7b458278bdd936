import json

import numpy as np
import pytest

from symnet import bench
from symnet.errors import ContractError
from symnet.tensor import _backend


def test_symv_storage_columns_exact():
    res = bench.bench_symv([8, 33], reps=30, backends=["python"])
    for r in res:
        assert r.storage_dense == r.n * r.n
        assert r.storage_packed == r.n * (r.n + 1) // 2
        assert r.correct and r.max_abs_diff <= 1e-12 * 40
        assert r.reps >= 30 and r.dense_min_s <= r.dense_median_s


def test_symm_bytes_column_analytic():
    res = bench.bench_symm([10], m=3, reps=30, backends=["python"], conv=False)
    (r,) = res
    assert r.bytes_dense - r.bytes_packed == 8 * (10 * 10 - 55)


def test_symm_includes_wrn_conv_widths():
    res = bench.bench_symm([4], m=2, reps=30, backends=["python"], conv_batch=1, conv_hw=4)
    conv = sorted(r.n for r in res if r.op.startswith("conv3x3"))
    assert conv == [16, 32, 64]
    for r in res:
        if r.op.startswith("conv3x3"):
            assert r.storage_dense == 9 * r.n * r.n and r.storage_packed == 9 * r.n * (r.n + 1) // 2


@pytest.mark.skipif(_backend.compiled is None, reason="compiled kernels not built")
def test_compiled_backend_included_by_default():
    res = bench.bench_symv([8], reps=30)
    assert {r.backend for r in res} == {"python", "compiled"}


def test_n_below_two_rejected():
    with pytest.raises(ValueError, match=">= 2"):
        bench.bench_symv([1])


def test_too_few_reps_rejected():
    with pytest.raises(ValueError, match="30"):
        bench.bench_symm([4], reps=10)


def test_mismatch_aborts_before_timing(monkeypatch):
    timed = []
    monkeypatch.setattr(bench, "symv_packed", lambda p, x, be=None: np.zeros(len(x)) + 1.0)
    monkeypatch.setattr(bench, "_time", lambda *a, **k: timed.append(1) or (1.0, 1.0))
    with pytest.raises(ContractError, match="refusing to time"):
        bench.bench_symv([6], backends=["python"])
    assert not timed


def test_dense_monotone_detects_violation():
    mk = lambda n, t: bench.BenchResult("symv", n, 1, "python", 30, t, t, t, t, 0, 0, 0, 0, 1.0, True, 0.0)
    assert bench.dense_monotone([mk(4, 1.0), mk(8, 2.0)], "symv")
    assert not bench.dense_monotone([mk(4, 3.0), mk(8, 2.0)], "symv")


def test_rows_are_json_serializable():
    res, info = bench.run_all((4, 8), m=2, reps=30, backends=["python"])
    for r in res:
        assert json.loads(json.dumps(r.row()))["op"] == r.op
    assert info["attempts"] >= 1
    assert "ratio" in bench.format_table(res)
