"""Quantile error against ground truth and the cost-model timings."""
from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from ..bounds import quantile_interval
from ..maxent import PHIS, SolverConfig, fit_sketch
from ..sketch import SketchArray


def quantile_error(sorted_data: np.ndarray, estimate: float, phi: float) -> float:
    """|rank(estimate) - floor(phi n)| / n, with rank counting strictly smaller elements."""
    n = sorted_data.shape[0]
    rank = int(np.searchsorted(sorted_data, estimate, side="left"))
    return abs(rank - np.floor(phi * n)) / n


@dataclass
class EvalReport:
    phis: np.ndarray
    errors: np.ndarray
    estimates: np.ndarray
    converged: bool = True
    n_merge: int = 0
    n_groups: int = 1
    t_merge: float = float("nan")
    t_est: float = float("nan")
    extra: dict = field(default_factory=dict)

    @property
    def eps_avg(self) -> float:
        return float(np.mean(self.errors))

    @property
    def eps_max(self) -> float:
        return float(np.max(self.errors))

    def rows(self):
        return [{"phi": float(p), "estimate": float(q), "error": float(e)}
                for p, q, e in zip(self.phis, self.estimates, self.errors)]


def errors_for(data: np.ndarray, estimates, phis=PHIS) -> np.ndarray:
    s = np.sort(np.asarray(data, dtype=np.float64))
    return np.array([quantile_error(s, q, p) for q, p in zip(estimates, phis)])


def evaluate_estimator(data: np.ndarray, estimator, phis=PHIS) -> EvalReport:
    """Score any callable ``phi -> estimate`` on ``data``."""
    phis = np.asarray(phis, dtype=np.float64)
    est = np.array([estimator(p) for p in phis])
    return EvalReport(phis, errors_for(data, est, phis), est)


def evaluate(data: np.ndarray, order: int = 10, config: SolverConfig = SolverConfig(),
             cell_size: int | None = None, phis=PHIS, round_integers: bool = False) -> EvalReport:
    """Sketch ``data`` (optionally pre-aggregated into cells), merge, solve and score."""
    data = np.asarray(data, dtype=np.float64)
    n = data.shape[0]
    cell = n if cell_size is None else int(cell_size)
    ids = np.arange(n) // cell
    arr = SketchArray.from_groups(data, ids, int(ids[-1]) + 1 if n else 0, order)
    t0 = time.perf_counter()
    merged = arr.merged()
    t_merge = (time.perf_counter() - t0) / max(len(arr) - 1, 1)
    t0 = time.perf_counter()
    dist = fit_sketch(merged, config)
    if dist.converged:
        est = dist.quantiles(phis)
    else:
        # same fallback as cube queries: midpoints of guaranteed intervals
        est = np.array([0.5 * sum(quantile_interval(merged, p)) for p in phis])
    t_est = time.perf_counter() - t0
    if round_integers:
        est = np.round(est)
    phis = np.asarray(phis, dtype=np.float64)
    return EvalReport(phis, errors_for(data, est, phis), est, dist.converged,
                      n_merge=len(arr), t_merge=t_merge, t_est=t_est,
                      extra={"k1": getattr(dist.basis, "k1", 0), "k2": getattr(dist.basis, "k2", 0)})
