"""Packed-symmetric kernels vs dense BLAS: storage, bytes touched, time.

Every case first checks that the packed result equals the dense one (max
abs difference <= 1e-12 relative to the output scale) and refuses to time
anything that disagrees.  Timings are per call, median and min over
``reps`` >= 30 calls after 5 untimed warmups.
"""
import time
from dataclasses import asdict, dataclass

import numpy as np

from .errors import ContractError
from .tensor import _backend, pack_symmetric, symm_packed, symv_packed

MIN_REPS = 30
WARMUP = 5
TOL = 1e-12
WRN_CONV_WIDTHS = (16, 32, 64)


@dataclass
class BenchResult:
    op: str
    n: int
    m: int
    backend: str
    reps: int
    dense_median_s: float
    dense_min_s: float
    packed_median_s: float
    packed_min_s: float
    storage_dense: int
    storage_packed: int
    bytes_dense: int
    bytes_packed: int
    ratio: float          # dense median / packed median (> 1 means packed is faster)
    correct: bool
    max_abs_diff: float

    def row(self):
        return asdict(self)


def _time(fn, reps, warmup=WARMUP):
    for _ in range(warmup):
        fn()
    ts = np.empty(reps)
    for i in range(reps):
        t = time.perf_counter()
        fn()
        ts[i] = time.perf_counter() - t
    return float(np.median(ts)), float(ts.min())


def _gate(op, n, dense, packed):
    diff = float(np.abs(dense - packed).max())
    scale = max(1.0, float(np.abs(dense).max()))
    if not diff <= TOL * scale:
        raise ContractError(f"{op} n={n}: packed result differs from dense by {diff:g}; refusing to time")
    return diff


def _backends(backends):
    if backends is None:
        backends = ["python"] + (["compiled"] if _backend.compiled is not None else [])
    return list(backends)


def _sym(rng, n):
    a = rng.normal(size=(n, n))
    return np.triu(a) + np.triu(a, 1).T


def _check_sizes(sizes):
    for n in sizes:
        if n < 2:
            raise ValueError(f"benchmark sizes must be >= 2, got {n}")


def bench_symv(sizes, reps=MIN_REPS, backends=None, seed=0):
    _check_sizes(sizes)
    if reps < MIN_REPS:
        raise ValueError(f"reps must be >= {MIN_REPS}")
    rng = np.random.default_rng(seed)
    out = []
    for n in sizes:
        S = _sym(rng, n)
        p = pack_symmetric(S)
        x = rng.normal(size=n)
        for be in _backends(backends):
            diff = _gate("symv", n, S @ x, symv_packed(p, x, be))
            dmed, dmin = _time(lambda: S @ x, reps)
            pmed, pmin = _time(lambda: symv_packed(p, x, be), reps)
            np_ = n * (n + 1) // 2
            out.append(BenchResult("symv", n, 1, be, reps, dmed, dmin, pmed, pmin, n * n, np_,
                                   8 * (n * n + 2 * n), 8 * (np_ + 2 * n), dmed / pmed, True, diff))
    return out


def bench_symm(sizes, m=64, reps=MIN_REPS, backends=None, seed=0, conv=True, conv_batch=4, conv_hw=16):
    """Matrix-matrix cases, plus channel-wise symmetric 3x3 convolutions sized like WRN conv1."""
    _check_sizes(sizes)
    if reps < MIN_REPS:
        raise ValueError(f"reps must be >= {MIN_REPS}")
    rng = np.random.default_rng(seed)
    out = []
    for n in sizes:
        S = _sym(rng, n)
        p = pack_symmetric(S)
        B = rng.normal(size=(n, m))
        for be in _backends(backends):
            diff = _gate("symm", n, S @ B, symm_packed(p, B, be))
            dmed, dmin = _time(lambda: S @ B, reps)
            pmed, pmin = _time(lambda: symm_packed(p, B, be), reps)
            np_ = n * (n + 1) // 2
            out.append(BenchResult("symm", n, m, be, reps, dmed, dmin, pmed, pmin, n * n, np_,
                                   8 * (n * n + 2 * n * m), 8 * (np_ + 2 * n * m), dmed / pmed, True, diff))
    if conv:
        for n in WRN_CONV_WIDTHS:
            out.extend(bench_conv_channelwise(n, reps, backends, rng, conv_batch, conv_hw))
    return out


def bench_conv_channelwise(n, reps=MIN_REPS, backends=None, rng=None, batch=4, hw=16, k=3):
    """3x3 conv with a channel-wise symmetric kernel: dense im2col GEMM vs
    one packed symm per spatial tap."""
    rng = np.random.default_rng(0) if rng is None else rng
    taps = [_sym(rng, n) for _ in range(k * k)]
    packed = [pack_symmetric(s) for s in taps]
    W = np.stack(taps).reshape(k, k, n, n).transpose(2, 3, 0, 1)      # (n, n, k, k)
    cols = rng.normal(size=(n, k * k, batch * hw * hw))               # im2col rows grouped by tap
    Wmat = W.reshape(n, n * k * k)
    colmat = cols.reshape(n * k * k, -1)

    def dense():
        return Wmat @ colmat

    def packed_conv(be):
        y = symm_packed(packed[0], cols[:, 0], be)
        for t in range(1, k * k):
            y += symm_packed(packed[t], cols[:, t], be)
        return y

    out = []
    m = batch * hw * hw
    for be in _backends(backends):
        diff = _gate(f"conv{k}x{k}", n, dense(), packed_conv(be))
        dmed, dmin = _time(dense, reps)
        pmed, pmin = _time(lambda: packed_conv(be), reps)
        sd, sp = k * k * n * n, k * k * n * (n + 1) // 2
        out.append(BenchResult(f"conv{k}x{k}_channelwise", n, m, be, reps, dmed, dmin, pmed, pmin, sd, sp,
                               8 * (sd + n * k * k * m + n * m), 8 * (sp + n * k * k * m + n * m),
                               dmed / pmed, True, diff))
    return out


def dense_monotone(results, op):
    """True when the dense median time never decreases with n for ``op``."""
    rows = sorted({(r.n, r.dense_median_s) for r in results if r.op == op and r.backend == results[0].backend})
    t = [x[1] for x in rows]
    return all(a <= b for a, b in zip(t, t[1:]))


def run_all(sizes=(64, 128, 256, 512), m=64, reps=MIN_REPS, backends=None, retries=3, seed=0):
    """symv + symm + conv cases; re-measures when the dense baseline is not monotone in n."""
    for attempt in range(retries + 1):
        v = bench_symv(sizes, reps, backends, seed)
        s = bench_symm(sizes, m, reps, backends, seed)
        mono = dense_monotone(v, "symv") and dense_monotone(s, "symm")
        if mono:
            break
    return v + s, {"dense_monotone": mono, "attempts": attempt + 1}


def format_table(results):
    head = f"{'op':<24}{'n':>5}{'m':>6} {'backend':<9}{'dense med':>11}{'packed med':>12}{'ratio':>8}" \
           f"{'store d/p':>16}"
    lines = [head]
    for r in results:
        lines.append(f"{r.op:<24}{r.n:>5}{r.m:>6} {r.backend:<9}{r.dense_median_s * 1e6:>9.1f}us"
                     f"{r.packed_median_s * 1e6:>10.1f}us{r.ratio:>8.3f}{r.storage_dense:>9}/{r.storage_packed:<7}")
    return "\n".join(lines)
