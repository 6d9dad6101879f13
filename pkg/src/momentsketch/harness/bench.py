"""Micro-benchmarks for the query cost model t_query = t_merge * n_merge + t_est.

Timings use a warm-up run then the median of ``repeats`` wall-clock runs.
"""
from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from ..maxent import PHIS, SolverConfig, fit_sketch
from ..sketch import MomentsSketch, SketchArray


def _median_time(fn, repeats: int = 5) -> float:
    fn()
    times = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return float(np.median(times))


def random_cells(n_cells: int, order: int = 10, per_cell: int = 2, seed=None) -> SketchArray:
    """``n_cells`` exponential-data sketches of ``per_cell`` points each."""
    rng = np.random.default_rng(seed)
    x = rng.exponential(size=n_cells * per_cell)
    return SketchArray.from_groups(x, np.repeat(np.arange(n_cells), per_cell), n_cells, order)


def merge_latency(n_cells: int = 100_000, order: int = 10, repeats: int = 5, seed=0) -> float:
    """Seconds per merge for a column-wise roll-up of ``n_cells`` sketches."""
    arr = random_cells(n_cells, order, seed=seed)
    return _median_time(arr.merged, repeats) / (n_cells - 1)


def object_merge_latency(n_merges: int = 10_000, order: int = 10, repeats: int = 5, seed=0) -> float:
    """Seconds per merge when folding sketch objects one at a time."""
    arr = random_cells(64, order, seed=seed)
    cells = [arr[i] for i in range(64)]

    def run():
        acc = MomentsSketch(order)
        for i in range(n_merges):
            acc.merge_into(cells[i & 63])

    return _median_time(run, repeats) / n_merges


def solve_latency(order: int = 10, n: int = 100_000, repeats: int = 5,
                  config: SolverConfig = SolverConfig(), seed=0) -> dict:
    """Seconds for one solve and for the 21 standard quantiles after it."""
    x = np.random.default_rng(seed).exponential(size=n)
    sk = MomentsSketch.from_values(x, order)
    dist = fit_sketch(sk, config)
    return {
        "solve": _median_time(lambda: fit_sketch(sk, config), repeats),
        "quantiles": _median_time(lambda: dist.quantiles(PHIS), repeats),
    }


@dataclass
class SweepResult:
    n_merge: np.ndarray
    t_query: np.ndarray
    slope: float
    intercept: float
    r2: float

    def rows(self):
        return [{"n_merge": int(n), "t_query": float(t)} for n, t in zip(self.n_merge, self.t_query)]


def n_merge_sweep(n_values=(1_000, 3_000, 10_000, 30_000, 100_000, 300_000, 1_000_000),
                  order: int = 10, repeats: int = 5, config: SolverConfig = SolverConfig(),
                  seed=0) -> SweepResult:
    """Time merge-then-estimate over increasing cell counts and fit the linear model."""
    n_values = np.asarray(n_values, dtype=np.int64)
    arr = random_cells(int(n_values.max()), order, seed=seed)
    out = []
    for n in n_values:
        idx = slice(0, int(n))
        sub = SketchArray(order, arr.counts[idx], arr.mins[idx], arr.maxs[idx],
                          arr.power_sums[idx], arr.log_sums[idx])

        def query():
            fit_sketch(sub.merged(), config).quantiles(PHIS)

        out.append(_median_time(query, repeats))
    t = np.array(out)
    slope, intercept = np.polyfit(n_values.astype(float), t, 1)
    pred = slope * n_values + intercept
    r2 = 1.0 - np.sum((t - pred) ** 2) / np.sum((t - t.mean()) ** 2)
    return SweepResult(n_values, t, float(slope), float(intercept), float(r2))


def parallel_merge(n_cells: int = 1_000_000, threads=(1, 2, 4, 8), order: int = 10,
                   repeats: int = 5, seed=0) -> list:
    """Throughput of sharded roll-ups; each result carries its max relative deviation."""
    arr = random_cells(n_cells, order, seed=seed)
    ref = arr.merged()
    scale = np.abs(ref.fields()) + np.finfo(float).tiny
    rows = []
    for th in threads:
        sec = _median_time(lambda: arr.merged(threads=th), repeats)
        dev = float(np.max(np.abs(arr.merged(threads=th).fields() - ref.fields()) / scale))
        rows.append({"threads": int(th), "seconds": sec, "merges_per_sec": (n_cells - 1) / sec,
                     "max_rel_dev": dev})
    return rows
