"""The moments sketch: min, max, count and the first k power and log-power sums.

Sums are stored unscaled (``sum(x**i)`` rather than the mean) so that merging
is plain element-wise addition.  Counts are exact integers.
"""
from __future__ import annotations

import math
import struct
from concurrent.futures import ThreadPoolExecutor
from typing import Iterable, Sequence

import numpy as np

from .errors import (
    IncompatibleSketchError,
    InvalidParameterError,
    InvalidSubtractionError,
    InvalidValueError,
    SketchFormatError,
)

MAX_ORDER = 20
MAGIC = b"MSK1"
VERSION = 1
FLAG_EXTREMA_STALE = 0x01
FLAG_COMPRESSED = 0x02

_HEADER = struct.Struct("<4sBBHQ")  # magic, version, flags, order, count
_EXTREMA = struct.Struct("<dd")

# rows of the (n, k) power table built per chunk in add_many
_CHUNK = 1 << 16


def _check_order(order: int) -> int:
    if isinstance(order, bool) or not isinstance(order, (int, np.integer)):
        raise InvalidParameterError(f"order must be an integer, got {order!r}")
    if not 1 <= order <= MAX_ORDER:
        raise InvalidParameterError(f"order must be in [1, {MAX_ORDER}], got {order}")
    return int(order)


def _power_table(x: np.ndarray, k: int) -> np.ndarray:
    # iterated multiplication: column i holds x**(i+1)
    return np.cumprod(np.repeat(x[:, None], k, axis=1), axis=1)


class MomentsSketch:
    """Fixed-size mergeable summary of a set of floats.

    ``power_sums[i]`` holds ``sum(x**(i+1))`` and ``log_sums[i]`` holds
    ``sum(log(x)**(i+1))`` over the strictly positive points.  An empty sketch
    carries ``min=+inf`` and ``max=-inf``.
    """

    __slots__ = ("order", "count", "min", "max", "power_sums", "log_sums", "extrema_stale")

    def __init__(self, order: int):
        self.order = _check_order(order)
        self.count = 0
        self.min = math.inf
        self.max = -math.inf
        self.power_sums = np.zeros(self.order)
        self.log_sums = np.zeros(self.order)
        self.extrema_stale = False

    @classmethod
    def from_values(cls, values: Iterable[float], order: int, compensated: bool = False) -> "MomentsSketch":
        """Build a sketch over ``values`` in one vectorized pass.

        With ``compensated=True`` each column is summed with ``math.fsum``.
        """
        sk = cls(order)
        sk.add_many(values, compensated=compensated)
        return sk

    @classmethod
    def _from_fields(cls, order, count, xmin, xmax, power_sums, log_sums, stale=False):
        sk = cls.__new__(cls)
        sk.order = order
        sk.count = int(count)
        sk.min = float(xmin)
        sk.max = float(xmax)
        sk.power_sums = np.asarray(power_sums, dtype=np.float64)
        sk.log_sums = np.asarray(log_sums, dtype=np.float64)
        sk.extrema_stale = bool(stale)
        return sk

    # -- accumulation --------------------------------------------------------

    def add(self, x: float) -> "MomentsSketch":
        x = float(x)
        if not math.isfinite(x):
            raise InvalidValueError(f"cannot accumulate non-finite value {x!r}")
        if x < self.min:
            self.min = x
        if x > self.max:
            self.max = x
        self.count += 1
        ps = self.power_sums
        p = x
        for i in range(self.order):
            ps[i] += p
            p *= x
        if x > 0:
            lx = math.log(x)
            ls = self.log_sums
            p = lx
            for i in range(self.order):
                ls[i] += p
                p *= lx
        return self

    def add_many(self, values: Iterable[float], compensated: bool = False) -> "MomentsSketch":
        x = np.asarray(values, dtype=np.float64).ravel()
        if x.size == 0:
            return self
        if not np.all(np.isfinite(x)):
            raise InvalidValueError("cannot accumulate non-finite values")
        k = self.order
        ps = np.zeros(k)
        ls = np.zeros(k)
        for start in range(0, x.size, _CHUNK):
            chunk = x[start:start + _CHUNK]
            logs = np.log(chunk[chunk > 0])
            if compensated:
                pt = _power_table(chunk, k)
                ps += [math.fsum(col) for col in pt.T]
                if logs.size:
                    ls += [math.fsum(col) for col in _power_table(logs, k).T]
            else:
                ps += _power_table(chunk, k).sum(axis=0)
                if logs.size:
                    ls += _power_table(logs, k).sum(axis=0)
        self.power_sums = self.power_sums + ps
        self.log_sums = self.log_sums + ls
        self.count += int(x.size)
        self.min = min(self.min, float(x.min()))
        self.max = max(self.max, float(x.max()))
        return self

    # -- combination ---------------------------------------------------------

    def _check_compatible(self, other: "MomentsSketch") -> None:
        if self.order != other.order:
            raise IncompatibleSketchError(
                f"cannot combine sketches of order {self.order} and {other.order}"
            )

    def merge(self, other: "MomentsSketch") -> "MomentsSketch":
        """Return a new sketch summarizing the union of both inputs."""
        self._check_compatible(other)
        return MomentsSketch._from_fields(
            self.order,
            self.count + other.count,
            min(self.min, other.min),
            max(self.max, other.max),
            self.power_sums + other.power_sums,
            self.log_sums + other.log_sums,
            self.extrema_stale or other.extrema_stale,
        )

    __add__ = merge

    def merge_into(self, other: "MomentsSketch") -> "MomentsSketch":
        """In-place merge; returns ``self``."""
        self._check_compatible(other)
        self.count += other.count
        if other.min < self.min:
            self.min = other.min
        if other.max > self.max:
            self.max = other.max
        self.power_sums += other.power_sums
        self.log_sums += other.log_sums
        self.extrema_stale = self.extrema_stale or other.extrema_stale
        return self

    def subtract(self, pane: "MomentsSketch") -> "MomentsSketch":
        """Turnstile removal of ``pane``'s points.

        Extrema cannot be recovered under deletion, so the result keeps this
        sketch's min/max and is flagged ``extrema_stale``; callers must set
        real extrema with :meth:`with_extrema`.
        """
        self._check_compatible(pane)
        if pane.count > self.count:
            raise InvalidSubtractionError(
                f"cannot remove {pane.count} points from a sketch of {self.count}"
            )
        return MomentsSketch._from_fields(
            self.order,
            self.count - pane.count,
            self.min,
            self.max,
            self.power_sums - pane.power_sums,
            self.log_sums - pane.log_sums,
            True,
        )

    __sub__ = subtract

    def with_extrema(self, xmin: float, xmax: float) -> "MomentsSketch":
        return MomentsSketch._from_fields(
            self.order, self.count, xmin, xmax, self.power_sums.copy(), self.log_sums.copy(), False
        )

    def copy(self) -> "MomentsSketch":
        return MomentsSketch._from_fields(
            self.order, self.count, self.min, self.max,
            self.power_sums.copy(), self.log_sums.copy(), self.extrema_stale,
        )

    # -- inspection ----------------------------------------------------------

    @property
    def is_empty(self) -> bool:
        return self.count == 0

    @property
    def mean(self) -> float:
        return float(self.power_sums[0]) / self.count if self.count else math.nan

    @property
    def log_moments_valid(self) -> bool:
        """Log sums cover every point only when all points are positive."""
        return self.count > 0 and self.min > 0

    def fields(self) -> np.ndarray:
        """All float fields as one vector: min, max, power sums, log sums."""
        return np.concatenate(([self.min, self.max], self.power_sums, self.log_sums))

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, MomentsSketch):
            return NotImplemented
        return (
            self.order == other.order
            and self.count == other.count
            and self.extrema_stale == other.extrema_stale
            and self.fields().tobytes() == other.fields().tobytes()
        )

    def __repr__(self) -> str:
        return (
            f"MomentsSketch(order={self.order}, count={self.count}, "
            f"min={self.min!r}, max={self.max!r})"
        )

    # -- binary format -------------------------------------------------------

    def to_bytes(self) -> bytes:
        flags = FLAG_EXTREMA_STALE if self.extrema_stale else 0
        return (
            _HEADER.pack(MAGIC, VERSION, flags, self.order, self.count)
            + _EXTREMA.pack(self.min, self.max)
            + self.power_sums.astype("<f8").tobytes()
            + self.log_sums.astype("<f8").tobytes()
        )

    @classmethod
    def from_bytes(cls, data: bytes) -> "MomentsSketch":
        sk, used = _read_sketch(memoryview(bytes(data)), 0)
        if used != len(data):
            raise SketchFormatError(f"{len(data) - used} trailing bytes after sketch")
        return sk


def read_header(buf, offset: int = 0):
    """Parse the common header; returns (flags, order, count, next offset)."""
    if len(buf) - offset < _HEADER.size:
        raise SketchFormatError("truncated sketch header")
    magic, version, flags, order, count = _HEADER.unpack_from(buf, offset)
    if magic != MAGIC:
        raise SketchFormatError(f"bad magic {bytes(magic)!r}")
    if version != VERSION:
        raise SketchFormatError(f"unsupported version {version}")
    if not 1 <= order <= MAX_ORDER:
        raise SketchFormatError(f"order {order} out of range")
    return flags, order, count, offset + _HEADER.size


def pack_header(flags: int, order: int, count: int) -> bytes:
    return _HEADER.pack(MAGIC, VERSION, flags, order, count)


def _read_sketch(buf, offset: int):
    flags, order, count, pos = read_header(buf, offset)
    if flags & FLAG_COMPRESSED:
        raise SketchFormatError("compressed payload; use lowprec.decode")
    need = _EXTREMA.size + 16 * order
    if len(buf) - pos < need:
        raise SketchFormatError("truncated sketch body")
    xmin, xmax = _EXTREMA.unpack_from(buf, pos)
    pos += _EXTREMA.size
    sums = np.frombuffer(buf, dtype="<f8", count=2 * order, offset=pos).astype(np.float64)
    pos += 16 * order
    sk = MomentsSketch._from_fields(
        order, count, xmin, xmax, sums[:order].copy(), sums[order:].copy(),
        bool(flags & FLAG_EXTREMA_STALE),
    )
    return sk, pos


def serialized_size(order: int) -> int:
    return _HEADER.size + _EXTREMA.size + 16 * order


def iter_sketches(data: bytes):
    """Yield sketches from a concatenation of serialized sketches."""
    buf = memoryview(bytes(data))
    pos = 0
    while pos < len(buf):
        sk, pos = _read_sketch(buf, pos)
        yield sk


# -- functional API ----------------------------------------------------------

def new(order: int) -> MomentsSketch:
    return MomentsSketch(order)


def accumulate(sketch: MomentsSketch, x: float) -> MomentsSketch:
    return sketch.add(x)


def merge(a: MomentsSketch, b: MomentsSketch) -> MomentsSketch:
    return a.merge(b)


def subtract(window: MomentsSketch, pane: MomentsSketch) -> MomentsSketch:
    return window.subtract(pane)


def serialize(sketch: MomentsSketch) -> bytes:
    return sketch.to_bytes()


def deserialize(data: bytes) -> MomentsSketch:
    if not data:
        raise SketchFormatError("empty input")
    return MomentsSketch.from_bytes(data)


def merge_all(sketches: Iterable[MomentsSketch], order: int | None = None) -> MomentsSketch:
    """Sequential left fold of :meth:`MomentsSketch.merge_into`."""
    it = iter(sketches)
    first = next(it, None)
    if first is None:
        if order is None:
            raise InvalidParameterError("merge_all of no sketches needs an explicit order")
        return MomentsSketch(order)
    acc = first.copy()
    for sk in it:
        acc.merge_into(sk)
    return acc


class SketchArray:
    """Column-packed collection of same-order sketches.

    Roll-ups reduce whole columns at once, which is how cube queries merge
    thousands of cells without a Python-level loop per merge.
    """

    def __init__(self, order: int, counts, mins, maxs, power_sums, log_sums):
        self.order = _check_order(order)
        self.counts = np.asarray(counts, dtype=np.int64)
        self.mins = np.asarray(mins, dtype=np.float64)
        self.maxs = np.asarray(maxs, dtype=np.float64)
        self.power_sums = np.ascontiguousarray(power_sums, dtype=np.float64).reshape(-1, self.order)
        self.log_sums = np.ascontiguousarray(log_sums, dtype=np.float64).reshape(-1, self.order)

    @classmethod
    def from_sketches(cls, sketches: Sequence[MomentsSketch], order: int | None = None) -> "SketchArray":
        if not sketches:
            if order is None:
                raise InvalidParameterError("empty SketchArray needs an explicit order")
            return cls(order, [], [], [], np.zeros((0, order)), np.zeros((0, order)))
        order = sketches[0].order if order is None else order
        for sk in sketches:
            if sk.order != order:
                raise IncompatibleSketchError("all sketches in a SketchArray must share one order")
        return cls(
            order,
            [s.count for s in sketches],
            [s.min for s in sketches],
            [s.max for s in sketches],
            np.stack([s.power_sums for s in sketches]),
            np.stack([s.log_sums for s in sketches]),
        )

    @classmethod
    def from_groups(cls, values: np.ndarray, group_ids: np.ndarray, n_groups: int, order: int) -> "SketchArray":
        """Vectorized bulk construction: one sketch per group id in ``range(n_groups)``."""
        values = np.asarray(values, dtype=np.float64)
        group_ids = np.asarray(group_ids, dtype=np.int64)
        if not np.all(np.isfinite(values)):
            raise InvalidValueError("cannot accumulate non-finite values")
        k = _check_order(order)
        counts = np.bincount(group_ids, minlength=n_groups)
        mins = np.full(n_groups, np.inf)
        maxs = np.full(n_groups, -np.inf)
        np.minimum.at(mins, group_ids, values)
        np.maximum.at(maxs, group_ids, values)
        ps = np.zeros((n_groups, k))
        ls = np.zeros((n_groups, k))
        for start in range(0, values.size, _CHUNK):
            x = values[start:start + _CHUNK]
            g = group_ids[start:start + _CHUNK]
            pt = _power_table(x, k)
            for i in range(k):
                ps[:, i] += np.bincount(g, weights=pt[:, i], minlength=n_groups)
            pos = x > 0
            if np.any(pos):
                lt = _power_table(np.log(x[pos]), k)
                gp = g[pos]
                for i in range(k):
                    ls[:, i] += np.bincount(gp, weights=lt[:, i], minlength=n_groups)
        return cls(k, counts, mins, maxs, ps, ls)

    def __len__(self) -> int:
        return int(self.counts.shape[0])

    def __getitem__(self, i: int) -> MomentsSketch:
        return MomentsSketch._from_fields(
            self.order, self.counts[i], self.mins[i], self.maxs[i],
            self.power_sums[i].copy(), self.log_sums[i].copy(),
        )

    def take(self, indices) -> "SketchArray":
        idx = np.asarray(indices)
        return SketchArray(
            self.order, self.counts[idx], self.mins[idx], self.maxs[idx],
            self.power_sums[idx], self.log_sums[idx],
        )

    def _reduce(self, idx) -> MomentsSketch:
        if idx is None:
            counts, mins, maxs, ps, ls = self.counts, self.mins, self.maxs, self.power_sums, self.log_sums
        else:
            counts, mins, maxs = self.counts[idx], self.mins[idx], self.maxs[idx]
            ps, ls = self.power_sums[idx], self.log_sums[idx]
        if counts.size == 0:
            return MomentsSketch(self.order)
        return MomentsSketch._from_fields(
            self.order,
            int(counts.sum()),
            float(mins.min()),
            float(maxs.max()),
            np.add.reduce(ps, axis=0),
            np.add.reduce(ls, axis=0),
        )

    def group_reduce(self, group_ids, n_groups: int) -> "SketchArray":
        """Merge rows sharing a group id; returns one row per id in ``range(n_groups)``."""
        g = np.asarray(group_ids, dtype=np.int64)
        if g.shape[0] != len(self):
            raise InvalidParameterError("one group id per row required")
        counts = np.zeros(n_groups, dtype=np.int64)
        np.add.at(counts, g, self.counts)
        mins = np.full(n_groups, np.inf)
        maxs = np.full(n_groups, -np.inf)
        np.minimum.at(mins, g, self.mins)
        np.maximum.at(maxs, g, self.maxs)
        ps = np.zeros((n_groups, self.order))
        ls = np.zeros((n_groups, self.order))
        np.add.at(ps, g, self.power_sums)
        np.add.at(ls, g, self.log_sums)
        return SketchArray(self.order, counts, mins, maxs, ps, ls)

    def merged(self, indices=None, threads: int = 1) -> MomentsSketch:
        """Merge the selected rows (all rows when ``indices`` is None).

        ``threads > 1`` shards the rows, reduces each shard on its own
        worker and folds the shard results sequentially.
        """
        if threads <= 1:
            return self._reduce(indices)
        if indices is None:
            # contiguous slices are views, so shards cost no copies
            edges = np.linspace(0, len(self), threads + 1).astype(np.int64)
            shards = [slice(a, b) for a, b in zip(edges[:-1], edges[1:]) if b > a]
        else:
            idx = np.asarray(indices)
            if idx.dtype == bool:
                idx = np.flatnonzero(idx)
            shards = [s for s in np.array_split(idx, threads) if s.size]
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(self._reduce, shards))
        return merge_all(parts, order=self.order)
