"""Worst-case bounds on rank(t) = #{x in D : x < t} from a sketch's moments.

``markov_bound`` applies Markov's inequality to power moments of the shifted
data (x - min), the reflected data (max - x) and, for positive data, the
same two transforms of log(x).

``rtt_bound`` computes the Chebyshev-Markov-Stieltjes bounds: among all
distributions sharing moments 0..2m there is a unique discrete one with m+1
atoms that places an atom at t, and its cumulative masses strictly below and
up to t bound the cdf at t for every consistent distribution.  The atoms are
t plus the roots of the Christoffel-Darboux kernel K_m(., t) and the masses
are Christoffel numbers 1/K_m(x_j, x_j).  Everything is assembled in the
Chebyshev basis on the scaled [-1, 1] support to keep the moment matrices
well conditioned.  The procedure runs on standard and log moments
separately and keeps the tighter interval.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.linalg
from numpy.polynomial import chebyshev as C

from . import chebyshev as cheb
from .errors import DegenerateSupportError, EmptySketchError, InvalidParameterError
from .maxent import ChebyshevMoments, to_chebyshev_moments
from .sketch import MomentsSketch

# moment (Gram) matrices with a smaller eigenvalue ratio are treated as singular
_MIN_EIG_RATIO = 1e-9
# fraction of n added to each side of an RTT interval to absorb rounding
_RTT_SLACK = 1e-7
# weights of a canonical representation must sum to 1 within this
_MASS_TOL = 1e-6


@dataclass(frozen=True)
class RankBounds:
    lower: float
    upper: float
    t: float
    method: str = "markov"
    degraded: bool = False

    @property
    def width(self) -> float:
        return self.upper - self.lower


def _check(sketch: MomentsSketch):
    if sketch.count == 0:
        raise EmptySketchError("cannot bound ranks of an empty sketch")
    if sketch.extrema_stale:
        raise InvalidParameterError("sketch extrema are stale")


def _range_bounds(sketch: MomentsSketch, t: float):
    n = float(sketch.count)
    if t <= sketch.min:
        return RankBounds(0.0, 0.0, t, "range")
    if t > sketch.max:
        return RankBounds(n, n, t, "range")
    if sketch.min == sketch.max:
        # unreachable: min < t <= max is impossible for a point mass
        raise DegenerateSupportError(sketch.min)
    return None


def _shifted(raw: np.ndarray, origin: float, radius: float):
    """E[((x - origin)/radius)^i] plus a running rounding-error bound."""
    k = raw.shape[0] - 1
    scaled = [float(raw[i]) / radius ** i for i in range(k + 1)]
    shift = -origin / radius
    vals = np.empty(k + 1)
    errs = np.empty(k + 1)
    for j in range(k + 1):
        terms = [math.comb(j, i) * scaled[i] * shift ** (j - i) for i in range(j + 1)]
        vals[j] = math.fsum(terms)
        errs[j] = 8 * (j + 2) * np.finfo(float).eps * math.fsum(abs(x) for x in terms)
    return vals, errs


def _markov_family(raw: np.ndarray, lo: float, hi: float, t: float, orders: int, n: float):
    """(lower, upper) on rank from Markov on (x - lo) and (hi - x), orders 1..orders."""
    radius = 0.5 * (hi - lo)
    best_lo, best_hi = 0.0, n
    if orders < 1:
        return best_lo, best_hi
    raw = raw[: orders + 1]
    up, up_err = _shifted(raw, lo, radius)       # moments of (x - lo)/r >= 0
    down, down_err = _shifted(raw, hi, radius)   # (-1)^i moments of (hi - x)/r
    s_plus = (t - lo) / radius
    s_minus = (hi - t) / radius
    for i in range(1, orders + 1):
        if s_plus > 0:
            m = max(up[i] + up_err[i], 0.0) if i % 2 else max(up[i], 0.0) + up_err[i]
            best_lo = max(best_lo, n * (1.0 - m / s_plus ** i))
        if s_minus > 0:
            m = (-1) ** i * down[i]
            m = max(m, 0.0) + down_err[i]
            best_hi = min(best_hi, n * m / s_minus ** i)
    return best_lo, best_hi


def markov_bound(sketch: MomentsSketch, t: float, k1: int | None = None,
                 k2: int | None = None) -> RankBounds:
    """Tightest Markov-inequality bounds over all orders and transforms.

    ``k1``/``k2`` cap the standard/log orders used (defaults: all).
    """
    _check(sketch)
    t = float(t)
    early = _range_bounds(sketch, t)
    if early is not None:
        return early
    n = float(sketch.count)
    k = sketch.order
    k1 = k if k1 is None else min(k1, k)
    k2 = k if k2 is None else min(k2, k)
    raw = np.concatenate(([1.0], sketch.power_sums / sketch.count))
    lo, hi = _markov_family(raw, sketch.min, sketch.max, t, k1, n)
    if sketch.min > 0 and k2 > 0:
        lraw = np.concatenate(([1.0], sketch.log_sums / sketch.count))
        llo, lhi = _markov_family(lraw, math.log(sketch.min), math.log(sketch.max), math.log(t), k2, n)
        lo, hi = max(lo, llo), min(hi, lhi)
    lo = min(max(lo, 0.0), n)
    hi = min(max(hi, lo), n)
    return RankBounds(lo, hi, t, "markov")


def canonical_representation(moments: np.ndarray, xi: float):
    """Atoms and masses of the representation through ``xi``.

    ``moments`` are E[T_j(u)] for j = 0..K on the scaled variable.  Returns
    ``(atoms, masses, mass_at_xi)`` using the largest m with 2m <= K whose
    moment matrix is numerically positive definite, or None when even m = 1
    is singular.
    """
    K = moments.shape[0] - 1
    m = K // 2
    while m >= 1:
        i = np.arange(m + 1)
        G = 0.5 * (moments[i[:, None] + i[None, :]] + moments[np.abs(i[:, None] - i[None, :])])
        ev = np.linalg.eigvalsh(G)
        if ev[0] > _MIN_EIG_RATIO * ev[-1]:
            factor = scipy.linalg.cho_factor(G)
            Tx = cheb.chebvander(np.array([xi]), m)[:, 0]
            coef = scipy.linalg.cho_solve(factor, Tx)
            lam_xi = 1.0 / float(Tx @ coef)
            roots = C.chebroots(coef)
            if np.all(np.abs(roots.imag) <= 1e-8 * (1 + np.abs(roots.real))):
                atoms = np.sort(roots.real)
                Ta = cheb.chebvander(atoms, m)
                masses = 1.0 / np.einsum("ij,ij->j", Ta, scipy.linalg.cho_solve(factor, Ta))
                if abs(masses.sum() + lam_xi - 1.0) <= _MASS_TOL and np.all(masses > 0):
                    return atoms, masses, lam_xi
        m -= 1
    return None


def _cms_interval(moments: np.ndarray, xi: float):
    rep = canonical_representation(moments, xi)
    if rep is None:
        return None
    atoms, masses, lam_xi = rep
    below = float(masses[atoms < xi].sum())
    return below, below + lam_xi


def rtt_bound(sketch: MomentsSketch, t: float, k1: int | None = None,
              k2: int | None = None, moments: ChebyshevMoments | None = None) -> RankBounds:
    """Canonical-representation bounds; the tighter of standard and log runs."""
    _check(sketch)
    t = float(t)
    early = _range_bounds(sketch, t)
    if early is not None:
        return early
    n = float(sketch.count)
    k = sketch.order
    k1 = k if k1 is None else min(k1, k)
    k2 = k if k2 is None else min(k2, k)
    try:
        if moments is None:
            moments = to_chebyshev_moments(sketch)
        lo, hi = 0.0, 1.0
        found = False
        if k1 >= 2:
            a, b = moments.support
            xi = (t - 0.5 * (a + b)) / (0.5 * (b - a))
            iv = _cms_interval(moments.standard[: k1 + 1], xi)
            if iv is not None:
                lo, hi, found = max(lo, iv[0]), min(hi, iv[1]), True
        if moments.has_log and k2 >= 2:
            la, lb = moments.log_support
            xi = (math.log(t) - 0.5 * (la + lb)) / (0.5 * (lb - la))
            iv = _cms_interval(moments.log[: k2 + 1], xi)
            if iv is not None:
                lo, hi, found = max(lo, iv[0]), min(hi, iv[1]), True
    except (np.linalg.LinAlgError, ValueError, FloatingPointError):
        found = False
    if not found:
        mb = markov_bound(sketch, t, k1, k2)
        return RankBounds(mb.lower, mb.upper, t, "rtt", degraded=True)
    lower = min(max((lo - _RTT_SLACK) * n, 0.0), n)
    upper = min(max((hi + _RTT_SLACK) * n, lower), n)
    return RankBounds(lower, upper, t, "rtt")


def quantile_error_bound(sketch: MomentsSketch, q_hat: float, phi: float) -> float:
    """Worst-case quantile error of ``q_hat`` over all data matching the sketch."""
    rb = rtt_bound(sketch, q_hat)
    n = float(sketch.count)
    return max(abs(rb.lower / n - phi), abs(rb.upper / n - phi))


def quantile_interval(sketch: MomentsSketch, phi: float, iterations: int = 48) -> tuple[float, float]:
    """Values bracketing the phi-quantile of every dataset matching the sketch.

    Bisects on ``rtt_bound``: below the left end the rank upper bound stays
    under n*phi, above the right end the lower bound exceeds it.
    """
    _check(sketch)
    if sketch.min == sketch.max:
        return sketch.min, sketch.max
    target = phi * sketch.count
    moments = to_chebyshev_moments(sketch)

    def search(pred):
        lo, hi = sketch.min, sketch.max
        for _ in range(iterations):
            mid = 0.5 * (lo + hi)
            if pred(rtt_bound(sketch, mid, moments=moments)):
                hi = mid
            else:
                lo = mid
        return lo, hi

    left = search(lambda b: b.upper >= target)[0]
    right = search(lambda b: b.lower > target)[1]
    return float(left), float(right)
