"""Pre-aggregated data cube: one moments sketch per cell, merged at query time.

Cells are keyed either by a tuple of dimension values or, in sequence mode,
by dimension values plus a block number so each cell holds ``cell_size``
consecutive rows.  A store persists as a directory holding ``manifest.json``
and ``cells.bin`` (the cell sketches back to back in the binary format).
"""
from __future__ import annotations

import csv
import json
import os
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np

from ..bounds import RankBounds, quantile_error_bound, quantile_interval, rtt_bound
from ..cascade import CascadeStats, ThresholdOutcome, threshold
from ..errors import InvalidParameterError, SketchFormatError
from ..maxent import SolverConfig, fit_sketch
from ..sketch import MomentsSketch, SketchArray, iter_sketches

MANIFEST_VERSION = 1
BLOCK_COLUMN = "_block"


@dataclass
class IngestReport:
    rows: int
    bad_rows: int
    cells: int


@dataclass
class CubeStore:
    dimensions: list
    metric: str
    order: int
    keys: list
    cells: SketchArray
    cell_size: int | None = None
    raw: dict | None = field(default=None, repr=False)

    def __post_init__(self):
        if len(self.keys) != len(self.cells):
            raise InvalidParameterError("one key per cell required")
        self._index = {k: i for i, k in enumerate(self.keys)}

    @property
    def key_columns(self) -> list:
        return self.dimensions + ([BLOCK_COLUMN] if self.cell_size else [])

    def __len__(self) -> int:
        return len(self.keys)

    def cell(self, key) -> MomentsSketch:
        return self.cells[self._index[tuple(key)]]

    @property
    def total_count(self) -> int:
        return int(self.cells.counts.sum())

    # selection -----------------------------------------------------------
    def select(self, where: Mapping | Callable | None = None) -> np.ndarray:
        """Indices of cells matching ``where``.

        ``where`` maps dimension names to a value or a collection of values,
        or is a predicate taking a ``{dimension: value}`` dict.
        """
        if where is None:
            return np.arange(len(self))
        cols = self.key_columns
        if callable(where):
            return np.array([i for i, k in enumerate(self.keys) if where(dict(zip(cols, k)))],
                            dtype=np.int64)
        pos = {}
        for name, allowed in where.items():
            if name not in cols:
                raise InvalidParameterError(f"unknown dimension {name!r}")
            if isinstance(allowed, (str, bytes)) or not hasattr(allowed, "__iter__"):
                allowed = (allowed,)
            pos[cols.index(name)] = {str(a) for a in allowed}
        return np.array([i for i, k in enumerate(self.keys)
                         if all(str(k[p]) in ok for p, ok in pos.items())], dtype=np.int64)

    def merged(self, where=None, threads: int = 1) -> MomentsSketch:
        idx = self.select(where)
        if idx.size == 0:
            raise InvalidParameterError("selection matches no cells")
        return self.cells.merged(idx, threads=threads)

    def raw_values(self, where=None) -> np.ndarray:
        """Rows behind the selected cells (evaluation mode only)."""
        if self.raw is None:
            raise InvalidParameterError("store was ingested without keep_raw")
        idx = self.select(where)
        parts = [self.raw[self.keys[i]] for i in idx]
        return np.concatenate(parts) if parts else np.empty(0)

    # persistence ---------------------------------------------------------
    def save(self, path: str):
        os.makedirs(path, exist_ok=True)
        manifest = {
            "version": MANIFEST_VERSION,
            "dimensions": self.dimensions,
            "metric": self.metric,
            "order": self.order,
            "cell_size": self.cell_size,
            "key_encoding": "json list of strings per cell, in cells.bin order",
            "keys": [list(k) for k in self.keys],
        }
        with open(os.path.join(path, "manifest.json"), "w") as f:
            json.dump(manifest, f, indent=1)
        with open(os.path.join(path, "cells.bin"), "wb") as f:
            for i in range(len(self)):
                f.write(self.cells[i].to_bytes())

    @classmethod
    def load(cls, path: str) -> "CubeStore":
        with open(os.path.join(path, "manifest.json")) as f:
            manifest = json.load(f)
        if manifest.get("version") != MANIFEST_VERSION:
            raise SketchFormatError(f"unsupported manifest version {manifest.get('version')}")
        with open(os.path.join(path, "cells.bin"), "rb") as f:
            sketches = list(iter_sketches(f.read()))
        keys = [tuple(k) for k in manifest["keys"]]
        if len(sketches) != len(keys):
            raise SketchFormatError("manifest and cells.bin disagree on cell count")
        order = int(manifest["order"])
        return cls(manifest["dimensions"], manifest["metric"], order, keys,
                   SketchArray.from_sketches(sketches, order=order), manifest.get("cell_size"))


def build_cube(values: np.ndarray, dims: Mapping[str, Sequence] | None = None, order: int = 10,
               cell_size: int | None = None, metric: str = "value", keep_raw: bool = False) -> CubeStore:
    """Aggregate in-memory columns into a cube."""
    values = np.asarray(values, dtype=np.float64)
    dims = dict(dims or {})
    names = list(dims)
    cols = [np.asarray(dims[d]).astype(str) for d in names]
    n = values.shape[0]
    if cell_size is not None and cell_size < 1:
        raise InvalidParameterError("cell_size must be positive")
    if n == 0:
        raise InvalidParameterError("no rows to aggregate")
    if cols:
        stacked = np.stack(cols, axis=1)
        uniq, inv = np.unique(stacked, axis=0, return_inverse=True)
        inv = inv.reshape(-1)
        base_keys = [tuple(str(v) for v in r) for r in uniq]
    else:
        inv = np.zeros(n, dtype=np.int64)
        base_keys = [()]
    if cell_size is not None:
        # block number counts rows within each dimension tuple, in input order
        order_idx = np.argsort(inv, kind="stable")
        sorted_inv = inv[order_idx]
        within = np.empty(n, dtype=np.int64)
        within[order_idx] = np.arange(n) - np.searchsorted(sorted_inv, sorted_inv)
        block = within // cell_size
        width = int(block.max()) + 1
        upair, gid = np.unique(inv * width + block, return_inverse=True)
        keys = [base_keys[p // width] + (str(p % width),) for p in upair]
    else:
        gid = inv
        keys = base_keys
    gid = gid.reshape(-1)
    arr = SketchArray.from_groups(values, gid, len(keys), order)
    raw = None
    if keep_raw:
        srt = np.argsort(gid, kind="stable")
        splits = np.split(values[srt], np.cumsum(np.bincount(gid, minlength=len(keys)))[:-1])
        raw = {k: v for k, v in zip(keys, splits)}
    return CubeStore(names, metric, order, keys, arr, cell_size, raw)


def read_csv(path_or_file, dims: Sequence[str], metric: str):
    """Parse a headered CSV; returns (values, {dim: column}, rows, bad_rows)."""
    close = False
    f = path_or_file
    if isinstance(path_or_file, (str, os.PathLike)):
        f = open(path_or_file, newline="")
        close = True
    try:
        reader = csv.DictReader(f)
        header = reader.fieldnames or []
        for name in list(dims) + [metric]:
            if name not in header:
                raise InvalidParameterError(f"column {name!r} not in CSV header {header}")
        vals, cols = [], {d: [] for d in dims}
        rows = bad = 0
        for row in reader:
            rows += 1
            try:
                x = float(row[metric])
                if not np.isfinite(x) or any(row[d] is None for d in dims):
                    raise ValueError
            except (TypeError, ValueError):
                bad += 1
                continue
            vals.append(x)
            for d in dims:
                cols[d].append(row[d])
    finally:
        if close:
            f.close()
    return np.array(vals, dtype=np.float64), cols, rows, bad


def ingest(path_or_file, dims: Sequence[str] = (), metric: str = "value", order: int = 10,
           cell_size: int | None = None, keep_raw: bool = False):
    """CSV -> (CubeStore, IngestReport).  Malformed rows are skipped and counted."""
    values, cols, rows, bad = read_csv(path_or_file, list(dims), metric)
    if values.size == 0:
        raise InvalidParameterError(f"no parseable rows ({bad} malformed of {rows})")
    store = build_cube(values, cols, order, cell_size, metric, keep_raw)
    return store, IngestReport(rows, bad, len(store))


# queries -----------------------------------------------------------------
@dataclass
class QuantileAnswer:
    phis: np.ndarray
    estimates: np.ndarray
    bounds: list
    error_bounds: np.ndarray
    count: int
    converged: bool
    intervals: list | None = None

    def rows(self):
        out = []
        for i, p in enumerate(self.phis):
            row = {"phi": float(p), "estimate": float(self.estimates[i]),
                   "error_bound": float(self.error_bounds[i]), "converged": self.converged}
            if self.intervals is not None:
                row["lower"], row["upper"] = self.intervals[i]
            out.append(row)
        return out


def query_quantile(store: CubeStore, where=None, phis=(0.5,), config: SolverConfig = SolverConfig(),
                   round_integers: bool = False, threads: int = 1) -> QuantileAnswer:
    """Merge the selection, solve once and answer every phi.

    When the solver does not converge the answer is bounds-only and flagged
    with ``converged=False``: ``intervals`` holds value ranges guaranteed to
    contain each quantile and the estimates are their midpoints.
    """
    sk = store.merged(where, threads=threads)
    phis = np.atleast_1d(np.asarray(phis, dtype=np.float64))
    dist = fit_sketch(sk, config)
    if not dist.converged:
        intervals = [quantile_interval(sk, p) for p in phis]
        est = np.array([0.5 * (a + b) for a, b in intervals])
        if round_integers:
            est = np.round(est)
        errs = np.array([quantile_error_bound(sk, q, p) for q, p in zip(est, phis)])
        return QuantileAnswer(phis, est, [rtt_bound(sk, q) for q in est], errs,
                              sk.count, False, intervals)
    est = dist.quantiles(phis)
    if round_integers:
        est = np.round(est)
    bounds: list[RankBounds] = []
    errs = []
    for q, p in zip(est, phis):
        bounds.append(rtt_bound(sk, q))
        errs.append(quantile_error_bound(sk, q, p))
    return QuantileAnswer(phis, est, bounds, np.array(errs), sk.count, True)


@dataclass
class GroupResult:
    key: tuple
    count: int
    outcome: ThresholdOutcome

    @property
    def qualifies(self) -> bool:
        return bool(self.outcome.decision)


@dataclass
class ThresholdAnswer:
    group_by: list
    phi: float
    t: float
    groups: list
    stats: CascadeStats

    @property
    def qualifying(self) -> list:
        return [g for g in self.groups if g.qualifies]

    @property
    def indeterminate(self) -> list:
        return [g for g in self.groups if g.outcome.indeterminate]


def group_sketches(store: CubeStore, group_by: Sequence[str]):
    """Roll the cube up to ``group_by``; returns (keys, SketchArray)."""
    cols = store.key_columns
    for g in group_by:
        if g not in cols:
            raise InvalidParameterError(f"unknown dimension {g!r}")
    pos = [cols.index(g) for g in group_by]
    proj = [tuple(k[p] for p in pos) for k in store.keys]
    uniq = sorted(set(proj))
    lookup = {k: i for i, k in enumerate(uniq)}
    gid = np.array([lookup[k] for k in proj], dtype=np.int64)
    return uniq, store.cells.group_reduce(gid, len(uniq))


def query_threshold_groups(store: CubeStore, group_by: Sequence[str], phi: float,
                           t: float | None = None, global_phi: float | None = None,
                           config: SolverConfig = SolverConfig()) -> ThresholdAnswer:
    """Groups whose estimated phi-quantile exceeds ``t``.

    With ``t=None`` the threshold is the ``global_phi`` quantile estimated
    from the merge of all cells, as in outlier-explanation workloads.
    """
    if t is None:
        if global_phi is None:
            raise InvalidParameterError("give a threshold t or a global_phi")
        t = float(fit_sketch(store.merged(), config).quantile(global_phi))
    keys, arr = group_sketches(store, group_by)
    stats = CascadeStats()
    groups = []
    for i, k in enumerate(keys):
        sk = arr[i]
        if sk.count == 0:
            continue
        groups.append(GroupResult(k, sk.count, threshold(sk, t, phi, config, stats)))
    return ThresholdAnswer(list(group_by), phi, float(t), groups, stats)
