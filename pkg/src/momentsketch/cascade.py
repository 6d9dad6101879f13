"""Threshold predicates "is q_phi > t?" resolved by a cheap-to-expensive cascade.

Stages run in order: range check, Markov bounds, canonical-representation
(RTT) bounds, then a full maximum-entropy solve.  Each bound stage brackets
rank(t) in [lower, upper]; ``lower > n*phi`` means at least a phi fraction of
any consistent dataset lies below t, so q_phi <= t and the answer is False,
while ``upper < n*phi`` means q_phi > t.

The bound stages only use the moment orders the solver would match, so a
decision taken early agrees with the one the solve would have produced.
"""
from __future__ import annotations

import time
from dataclasses import dataclass, field

from .bounds import RankBounds, markov_bound, rtt_bound
from .errors import DegenerateSupportError, EmptySketchError, InvalidParameterError
from .maxent import SolverConfig, select_moment_counts, solve_maxent, to_chebyshev_moments
from .sketch import MomentsSketch

STAGES = ("range", "markov", "rtt", "maxent")


@dataclass(frozen=True)
class ThresholdOutcome:
    """Result of one threshold call.

    ``decision`` is None when the solver failed and the bounds were not
    decisive; ``bounds`` then holds the last interval computed.
    """

    decision: bool | None
    resolved_by: str
    estimate: float | None = None
    bounds: RankBounds | None = None

    @property
    def indeterminate(self) -> bool:
        return self.decision is None


@dataclass
class CascadeStats:
    """Caller-owned collector of per-stage counts and wall-clock time."""

    counts: dict = field(default_factory=lambda: dict.fromkeys(STAGES, 0))
    seconds: dict = field(default_factory=lambda: dict.fromkeys(STAGES, 0.0))
    indeterminate: int = 0

    def record(self, outcome: ThresholdOutcome, elapsed: float):
        self.counts[outcome.resolved_by] += 1
        self.seconds[outcome.resolved_by] += elapsed
        self.indeterminate += outcome.indeterminate

    @property
    def total(self) -> int:
        return sum(self.counts.values())

    def fractions(self) -> dict:
        if self.total == 0:
            raise InvalidParameterError("no threshold calls recorded")
        return {s: self.counts[s] / self.total for s in STAGES}

    def mean_latency(self) -> dict:
        return {s: self.seconds[s] / self.counts[s] if self.counts[s] else float("nan")
                for s in STAGES}

    def early_fraction(self) -> float:
        """Share of calls resolved before the maxent stage."""
        return 1.0 - self.fractions()["maxent"]


def _decide(b: RankBounds, target: float):
    if b.lower > target:
        return False
    if b.upper < target:
        return True
    return None


def threshold(sketch: MomentsSketch, t: float, phi: float,
              config: SolverConfig = SolverConfig(),
              stats: CascadeStats | None = None) -> ThresholdOutcome:
    """Whether the maximum-entropy estimate of the phi-quantile exceeds ``t``."""
    start = time.perf_counter() if stats is not None else 0.0
    out = _threshold(sketch, float(t), float(phi), config)
    if stats is not None:
        stats.record(out, time.perf_counter() - start)
    return out


def _threshold(sketch, t, phi, config):
    if sketch.count == 0:
        raise EmptySketchError("threshold query on an empty sketch")
    if not 0.0 < phi < 1.0:
        raise InvalidParameterError(f"phi must be in (0, 1), got {phi}")
    if sketch.extrema_stale:
        raise InvalidParameterError("sketch extrema are stale")
    if t > sketch.max:
        return ThresholdOutcome(False, "range")
    if t < sketch.min:
        return ThresholdOutcome(True, "range")
    if sketch.min == sketch.max:
        # point mass at t: the estimate equals t, so it does not exceed it
        return ThresholdOutcome(False, "maxent", estimate=sketch.min)

    try:
        moments = to_chebyshev_moments(sketch)
    except DegenerateSupportError:  # pragma: no cover - guarded above
        return ThresholdOutcome(False, "maxent", estimate=sketch.min)
    basis = select_moment_counts(moments, config)
    target = sketch.count * phi

    b = markov_bound(sketch, t, basis.k1, basis.k2)
    d = _decide(b, target)
    if d is not None:
        return ThresholdOutcome(d, "markov", bounds=b)

    b = rtt_bound(sketch, t, basis.k1, basis.k2, moments=moments)
    d = _decide(b, target)
    if d is not None:
        return ThresholdOutcome(d, "rtt", bounds=b)

    dist = solve_maxent(moments, config, basis)
    if not dist.converged:
        return ThresholdOutcome(None, "maxent", bounds=b)
    q = dist.quantile(phi)
    return ThresholdOutcome(bool(q > t), "maxent", estimate=q, bounds=b)


def baseline_threshold(sketch: MomentsSketch, t: float, phi: float,
                       config: SolverConfig = SolverConfig()) -> bool | None:
    """Solve first, then compare; None if the solver does not converge."""
    from .maxent import fit_sketch

    dist = fit_sketch(sketch, config)
    if not dist.converged:
        return None
    return bool(dist.quantile(phi) > t)
