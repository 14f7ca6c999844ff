"""Timing of dense versus circulant matrix-vector products, and parameter counts."""

import time
from dataclasses import dataclass
from typing import Dict, List, Sequence, Tuple

import numpy as np

from .layers import build_dcnn, dense_param_count, param_count
from .linalg import CirculantMatrix, circ_matvec

DEFAULT_SIZES = tuple(2 ** p for p in range(8, 14))  # 256 .. 8192
PARAM_TABLE_SHAPES = ((256, 1), (1024, 4), (3072, 2), (4096, 10))


def loglog_slope(sizes: Sequence[int], times: Sequence[float]) -> float:
    return float(np.polyfit(np.log(sizes), np.log(times), 1)[0])


def _median_time(fn, reps: int) -> float:
    fn()  # warm caches and FFT plans
    samples = []
    for _ in range(reps):
        t0 = time.perf_counter()
        fn()
        samples.append(time.perf_counter() - t0)
    return float(np.median(samples))


@dataclass
class BenchReport:
    sizes: List[int]
    reps: int
    dense_median_s: List[float]
    circulant_median_s: List[float]
    dense_slope: float
    circulant_slope: float
    param_table: List[Dict]

    @property
    def slopes_ok(self) -> bool:
        return self.dense_slope >= 1.8 and self.circulant_slope <= 1.4

    @property
    def params_ok(self) -> bool:
        return all(row["matches_formula"] for row in self.param_table)

    def to_dict(self) -> dict:
        return {
            "sizes": self.sizes,
            "reps": self.reps,
            "dense_median_s": self.dense_median_s,
            "circulant_median_s": self.circulant_median_s,
            "dense_slope": self.dense_slope,
            "circulant_slope": self.circulant_slope,
            "slope_check": "ok" if self.slopes_ok else "warning",
            "param_table": self.param_table,
        }


def param_table(shapes: Sequence[Tuple[int, int]] = PARAM_TABLE_SHAPES) -> List[Dict]:
    """Formula counts next to counts taken from an actual network of each shape."""
    rows = []
    for n, L in shapes:
        dc = param_count(n, L)
        dense = dense_param_count(n, L)
        net = build_dcnn(n, L)
        weights = sum(l.diag.n + l.circ.n for l in net.layers)
        biases = sum(l.bias.shape[0] for l in net.layers)
        rows.append({
            "width": n,
            "depth": L,
            "dc_complex_weights": dc.complex_weights,
            "dc_complex_biases": dc.complex_biases,
            "dc_real_params": dc.real_params,
            "dense_complex_weights": dense.complex_weights,
            "dense_complex_biases": dense.complex_biases,
            "dense_real_params": dense.real_params,
            "matches_formula": weights == dc.complex_weights and biases == dc.complex_biases,
        })
    return rows


def run_bench(sizes: Sequence[int] = DEFAULT_SIZES, reps: int = 5, seed: int = 0) -> BenchReport:
    sizes = [int(s) for s in sizes]
    if len(sizes) < 2 or any(b <= a for a, b in zip(sizes, sizes[1:])):
        raise ValueError("sizes must be strictly increasing with at least two entries")
    if reps < 5:
        raise ValueError("at least 5 repetitions per cell")
    rng = np.random.default_rng(seed)
    dense_t, circ_t = [], []
    for n in sizes:
        x = rng.normal(size=n) + 1j * rng.normal(size=n)
        A = np.empty((n, n), dtype=complex)
        A.real = rng.normal(size=(n, n))
        A.imag = rng.normal(size=(n, n))
        dense_t.append(_median_time(lambda: A @ x, reps))
        A = None  # release the n x n buffer before the next size
        C = CirculantMatrix(rng.normal(size=n) + 1j * rng.normal(size=n))
        circ_t.append(_median_time(lambda: circ_matvec(C, x), reps))
    return BenchReport(sizes, reps, dense_t, circ_t, loglog_slope(sizes, dense_t),
                       loglog_slope(sizes, circ_t), param_table())
