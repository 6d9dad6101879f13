"""Seeded synthetic datasets used by the evaluation and benchmark workloads."""
from __future__ import annotations

import csv
import io

import numpy as np

from ..errors import InvalidParameterError

DATASETS = ("exponential", "gamma", "outliers", "uniform-discrete")


def _positive(name, value):
    if not value > 0:
        raise InvalidParameterError(f"{name} must be positive, got {value}")


def exponential(n: int, lam: float = 1.0, seed=None) -> np.ndarray:
    _positive("lam", lam)
    return np.random.default_rng(seed).exponential(1.0 / lam, size=int(n))


def gamma(n: int, shape: float = 1.0, seed=None) -> np.ndarray:
    """Gamma(k_s, theta=1); small shapes are heavily skewed."""
    _positive("shape", shape)
    return np.random.default_rng(seed).gamma(shape, 1.0, size=int(n))


def gaussian_outliers(n: int, outlier_mean: float = 10.0, sigma: float = 0.1,
                      fraction: float = 0.01, seed=None) -> np.ndarray:
    """N(0, sigma) with a fixed ``fraction`` of points drawn from N(outlier_mean, sigma)."""
    _positive("sigma", sigma)
    if not 0.0 <= fraction <= 1.0:
        raise InvalidParameterError(f"fraction must be in [0, 1], got {fraction}")
    rng = np.random.default_rng(seed)
    n = int(n)
    x = rng.normal(0.0, sigma, size=n)
    n_out = int(round(fraction * n))
    idx = rng.choice(n, size=n_out, replace=False)
    x[idx] = rng.normal(outlier_mean, sigma, size=n_out)
    return x


def uniform_discrete(n: int, cardinality: int, seed=None) -> np.ndarray:
    """``cardinality`` evenly spaced points on [-1, 1], each repeated equally often.

    Every value appears at least once, so the realized cardinality is exact.
    """
    if cardinality < 1 or n < cardinality:
        raise InvalidParameterError("need 1 <= cardinality <= n")
    levels = np.linspace(-1.0, 1.0, cardinality) if cardinality > 1 else np.zeros(1)
    x = np.resize(levels, int(n))
    np.random.default_rng(seed).shuffle(x)
    return x


def generate(kind: str, n: int, seed=None, **params) -> np.ndarray:
    if kind == "exponential":
        return exponential(n, params.get("lam", 1.0), seed)
    if kind == "gamma":
        return gamma(n, params.get("shape", 1.0), seed)
    if kind == "outliers":
        return gaussian_outliers(n, params.get("outlier_mean", 10.0), params.get("sigma", 0.1),
                                 params.get("fraction", 0.01), seed)
    if kind == "uniform-discrete":
        return uniform_discrete(n, int(params.get("cardinality", 10)), seed)
    raise InvalidParameterError(f"unknown dataset {kind!r}; choose from {DATASETS}")


def to_csv(values: np.ndarray, dims: dict | None = None, metric: str = "value") -> str:
    """CSV text with optional dimension columns (name -> array) before the metric."""
    dims = dims or {}
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(list(dims) + [metric])
    cols = [np.asarray(v) for v in dims.values()]
    for i, x in enumerate(values):
        w.writerow([c[i] for c in cols] + [repr(float(x))])
    return buf.getvalue()


def spike_workload(n_panes: int = 432, per_pane: int = 200, pane_width: float = 10.0,
                   background_scale: float = 500.0 / np.log(100.0),
                   spikes=((100, 2000.0), (300, 1000.0)), spike_panes: int = 12,
                   spike_fraction: float = 0.1, seed=None):
    """Timestamped exponential background with injected constant-value spikes.

    The background 99th percentile is about 500.  Each spike adds
    ``spike_fraction * per_pane`` copies of its value to ``spike_panes``
    consecutive panes starting at the given pane index.  Returns
    ``(timestamps, values)``.
    """
    rng = np.random.default_rng(seed)
    ts = [np.repeat(np.arange(n_panes) * pane_width, per_pane) + rng.uniform(0, pane_width, n_panes * per_pane)]
    vals = [rng.exponential(background_scale, n_panes * per_pane)]
    extra = int(round(spike_fraction * per_pane))
    for start, value in spikes:
        panes = np.arange(start, min(start + spike_panes, n_panes))
        ts.append(np.repeat(panes * pane_width, extra) + rng.uniform(0, pane_width, panes.size * extra))
        vals.append(np.full(panes.size * extra, float(value)))
    return np.concatenate(ts), np.concatenate(vals)
