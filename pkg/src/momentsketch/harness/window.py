"""Sliding-window threshold monitoring over time panes with turnstile updates.

Each pane holds one sketch.  The window sketch advances by subtracting the
pane that leaves and merging the pane that enters, so each step costs two
fixed-size updates whatever the window length.  Subtraction cannot restore
extrema, so the window min/max are recomputed from the member panes.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..cascade import CascadeStats, ThresholdOutcome, threshold
from ..errors import InvalidParameterError
from ..maxent import SolverConfig
from ..sketch import MomentsSketch, SketchArray


@dataclass
class PaneSeries:
    """Consecutive panes of equal width; ``starts[i] = origin + i * pane_width``."""

    pane_width: float
    starts: np.ndarray
    panes: SketchArray

    def __len__(self) -> int:
        return len(self.panes)

    @classmethod
    def from_values(cls, timestamps, values, pane_width: float, order: int = 10,
                    origin: float | None = None) -> "PaneSeries":
        """Bucket ``values`` by ``floor((timestamp - origin) / pane_width)``.

        Empty buckets between the first and last pane are kept as empty panes.
        """
        if not pane_width > 0:
            raise InvalidParameterError("pane_width must be positive")
        ts = np.asarray(timestamps, dtype=np.float64)
        origin = float(ts.min()) if origin is None else float(origin)
        idx = np.floor((ts - origin) / pane_width).astype(np.int64)
        if idx.size and idx.min() < 0:
            raise InvalidParameterError("timestamps before origin")
        n = int(idx.max()) + 1 if idx.size else 0
        arr = SketchArray.from_groups(values, idx, n, order)
        return cls(float(pane_width), origin + pane_width * np.arange(n), arr)


@dataclass
class WindowResult:
    start: float
    end: float
    count: int
    outcome: ThresholdOutcome | None

    @property
    def flagged(self) -> bool:
        return bool(self.outcome is not None and self.outcome.decision)

    @property
    def indeterminate(self) -> bool:
        return self.outcome is not None and self.outcome.indeterminate


def sliding_windows(panes: PaneSeries, window_width: float):
    """Yield (first pane index, window sketch) maintained with turnstile updates."""
    ratio = window_width / panes.pane_width
    w = int(round(ratio))
    if w < 1 or not np.isclose(ratio, w):
        raise InvalidParameterError("window_width must be a positive multiple of pane_width")
    n = len(panes)
    if n < w:
        return
    arr = panes.panes
    window = arr.merged(np.arange(w))
    for i in range(n - w + 1):
        if i > 0:
            window = window.subtract(arr[i - 1]).merge_into(arr[i + w - 1])
        if window.count:
            lo = float(arr.mins[i:i + w].min())
            hi = float(arr.maxs[i:i + w].max())
            window = window.with_extrema(lo, hi)
        yield i, window


def query_sliding_window(panes: PaneSeries, window_width: float, phi: float, t: float,
                         config: SolverConfig = SolverConfig(),
                         stats: CascadeStats | None = None) -> list:
    """Windows whose estimated phi-quantile exceeds ``t`` (one result per position)."""
    out = []
    span = panes.pane_width * int(round(window_width / panes.pane_width))
    for i, window in sliding_windows(panes, window_width):
        start = float(panes.starts[i])
        outcome = threshold(window, t, phi, config, stats) if window.count else None
        out.append(WindowResult(start, start + span, int(window.count), outcome))
    return out
