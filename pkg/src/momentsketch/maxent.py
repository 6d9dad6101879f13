"""Maximum-entropy quantile estimation from a moments sketch.

The sketch's power sums are converted to Chebyshev moments on the scaled
support, a subset of moments is chosen to keep the Hessian well conditioned,
and the convex potential

    L(theta) = int exp(sum_i theta_i m_i(v)) dv - sum_i theta_i mu_i

is minimized with a damped Newton method.  Its gradient is the vector of
moment mismatches, so ``max|grad| <= tol`` means the fitted density matches
the sketch.  Integrals use degree-``n_c`` Chebyshev interpolants built with a
fast cosine transform.

Densities live on a *primary* scaled variable ``v`` in [-1, 1], either
``s1(x)`` or ``s2(log x)``.  Basis functions from the primary family are
exact Chebyshev polynomials in ``v``; the other family is interpolated.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import scipy.linalg
from numpy.polynomial import chebyshev as C
from scipy.optimize import brentq

from . import chebyshev as cheb
from .errors import (
    DegenerateSupportError,
    EmptySketchError,
    EstimateUnavailableError,
    InvalidParameterError,
)
from .sketch import MomentsSketch

STANDARD = "standard"
LOG = "log"

# the standard 21 evaluation quantiles
PHIS = tuple(np.linspace(0.01, 0.99, 21))

_EXP_CLIP = 700.0
# largest trailing-coefficient ratio for which the density counts as resolved
_MAX_TAIL = 1e-6


@dataclass(frozen=True)
class SolverConfig:
    tol: float = 1e-9
    kappa_max: float = 1e4
    n_c: int = 128
    max_iterations: int = 200
    ls_sufficient_decrease: float = 0.1
    ls_shrink: float = 0.5
    max_backtracks: int = 40
    ridge: float = 1e-10
    max_ridge_doublings: int = 8
    max_n_c: int = 2048

    def __post_init__(self):
        for name in ("tol", "kappa_max", "n_c", "max_iterations", "ls_sufficient_decrease",
                     "ls_shrink", "max_backtracks", "ridge"):
            if not getattr(self, name) > 0:
                raise InvalidParameterError(f"{name} must be positive")
        n = self.n_c
        if int(n) != n or n < 8 or n & (n - 1):
            raise InvalidParameterError(f"n_c must be a power of two >= 8, got {n}")
        if self.max_n_c < n:
            raise InvalidParameterError("max_n_c must be at least n_c")
        if not 0 < self.ls_shrink < 1 or not 0 < self.ls_sufficient_decrease < 0.5:
            raise InvalidParameterError("line-search parameters out of range")


@dataclass(frozen=True)
class BasisSpec:
    """Which moments are fitted and how values map onto [-1, 1].

    ``s1(x) = (x - c1) / r1`` over ``support``; ``s2(y) = (y - c2) / r2``
    over ``log_support`` (only when the minimum is positive).
    """

    k1: int
    k2: int
    support: tuple[float, float]
    log_support: tuple[float, float] | None = None
    primary: str = STANDARD

    def __post_init__(self):
        if self.k1 < 0 or self.k2 < 0 or self.k1 + self.k2 < 1:
            raise InvalidParameterError("need k1 + k2 >= 1")
        if self.k2 > 0 and self.log_support is None:
            raise InvalidParameterError("log moments need a positive support")
        if self.primary not in (STANDARD, LOG):
            raise InvalidParameterError(f"unknown primary domain {self.primary!r}")
        if self.primary == LOG and self.log_support is None:
            raise InvalidParameterError("log primary domain needs a positive support")

    @property
    def size(self) -> int:
        return self.k1 + self.k2

    def s1(self, x):
        a, b = self.support
        return (np.asarray(x, dtype=float) - 0.5 * (a + b)) / (0.5 * (b - a))

    def s1_inv(self, u):
        a, b = self.support
        return 0.5 * (a + b) + 0.5 * (b - a) * np.asarray(u, dtype=float)

    def s2(self, y):
        a, b = self.log_support
        return (np.asarray(y, dtype=float) - 0.5 * (a + b)) / (0.5 * (b - a))

    def s2_inv(self, v):
        a, b = self.log_support
        return 0.5 * (a + b) + 0.5 * (b - a) * np.asarray(v, dtype=float)

    def to_primary(self, x):
        x = np.clip(np.asarray(x, dtype=float), *self.support)
        if self.primary == STANDARD:
            v = self.s1(x)
        else:
            v = self.s2(np.log(x))
        return np.clip(v, -1.0, 1.0)

    def from_primary(self, v):
        if self.primary == STANDARD:
            x = self.s1_inv(v)
        else:
            x = np.exp(self.s2_inv(v))
        return np.clip(x, *self.support)

    def primary_jacobian(self, x):
        """dv/dx at ``x``."""
        a, b = self.support
        if self.primary == STANDARD:
            return np.full_like(np.asarray(x, dtype=float), 2.0 / (b - a))
        la, lb = self.log_support
        return 2.0 / ((lb - la) * np.asarray(x, dtype=float))

    def other_variable(self, v):
        """The non-primary family's scaled variable as a function of ``v``."""
        x = self.from_primary(v)
        if self.primary == STANDARD:
            w = self.s2(np.log(x))
        else:
            w = self.s1(x)
        return np.clip(w, -1.0, 1.0)

    @property
    def primary_count(self) -> int:
        return self.k1 if self.primary == STANDARD else self.k2

    @property
    def other_count(self) -> int:
        return self.k2 if self.primary == STANDARD else self.k1

    def internal_order(self) -> np.ndarray:
        """Permutation: internal position -> external theta index.

        External order is [theta_0, standard 1..k1, log 1..k2]; internally the
        primary family comes first.
        """
        std = list(range(1, self.k1 + 1))
        log = list(range(self.k1 + 1, self.k1 + self.k2 + 1))
        rest = std + log if self.primary == STANDARD else log + std
        return np.array([0] + rest)

    def design(self, v: np.ndarray) -> np.ndarray:
        """Basis functions (internal order) evaluated at primary points ``v``."""
        v = np.asarray(v, dtype=float)
        rows = [cheb.chebvander(v, self.primary_count)]
        q = self.other_count
        if q:
            rows.append(cheb.chebvander(self.other_variable(v), q)[1:])
        return np.vstack(rows)


@dataclass(frozen=True)
class ChebyshevMoments:
    """Sample means of T_j(s1(x)) and T_j(s2(log x)) for j = 0..k."""

    support: tuple[float, float]
    standard: np.ndarray
    log: np.ndarray | None
    count: int
    log_support: tuple[float, float] | None = None

    @property
    def order(self) -> int:
        return self.standard.shape[0] - 1

    @property
    def has_log(self) -> bool:
        return self.log is not None

    def target(self, basis: BasisSpec) -> np.ndarray:
        """Moment vector in external theta order: [1, std 1..k1, log 1..k2]."""
        parts = [np.array([1.0]), self.standard[1: basis.k1 + 1]]
        if basis.k2:
            parts.append(self.log[1: basis.k2 + 1])
        return np.concatenate(parts)


def to_chebyshev_moments(sketch: MomentsSketch) -> ChebyshevMoments:
    if sketch.count == 0:
        raise EmptySketchError("cannot estimate from an empty sketch")
    if sketch.extrema_stale:
        raise InvalidParameterError("sketch extrema are stale; set them with with_extrema()")
    a, b = sketch.min, sketch.max
    if a == b:
        raise DegenerateSupportError(a)
    n = sketch.count
    raw = np.concatenate(([1.0], sketch.power_sums / n))
    std = cheb.chebyshev_moments_from_monomial(cheb.shifted_moments(raw, 0.5 * (a + b), 0.5 * (b - a)))
    log = None
    log_support = None
    if a > 0:
        la, lb = math.log(a), math.log(b)
        lraw = np.concatenate(([1.0], sketch.log_sums / n))
        log = cheb.chebyshev_moments_from_monomial(
            cheb.shifted_moments(lraw, 0.5 * (la + lb), 0.5 * (lb - la))
        )
        log_support = (la, lb)
    return ChebyshevMoments((a, b), std, log, n, log_support)


def max_stable_order(center: float) -> int:
    """Largest k whose shifted moments stay numerically useful in doubles.

    ``center`` is the midpoint of data rescaled to the range [c-1, c+1].
    """
    k = math.floor(13.06 / (0.78 + math.log10(abs(center) + 1.0)))
    return max(2, min(20, k))


def _uniform_moment(j: int) -> float:
    """E[T_j(U)] for U uniform on [-1, 1]."""
    return 0.0 if j % 2 else 1.0 / (1.0 - j * j)


def choose_primary(moments: ChebyshevMoments) -> str:
    """Integrate over whichever scaled variable makes the data look more uniform."""
    if not moments.has_log:
        return STANDARD

    def dist(m):
        return sum(abs(m[j] - _uniform_moment(j)) for j in (1, 2) if j < m.shape[0])

    return LOG if dist(moments.log) < dist(moments.standard) else STANDARD


def uniform_hessian(moments: ChebyshevMoments, primary: str, n_c: int = 128) -> np.ndarray:
    """Hessian of the potential at the uniform density, over the full basis.

    Row/column order: [T_0, standard 1..k, log 1..k] (log block only when
    log moments exist).
    """
    k = moments.order
    k2 = k if moments.has_log else 0
    basis = BasisSpec(k, k2, moments.support, moments.log_support, primary)
    v = cheb.lobatto_nodes(n_c)
    D = basis.design(v)
    w = 0.5 * cheb.clenshaw_curtis_weights(n_c)
    H = (D * w) @ D.T
    perm = basis.internal_order()
    out = np.empty_like(H)
    out[np.ix_(perm, perm)] = H
    return out


def select_moment_counts(moments: ChebyshevMoments, config: SolverConfig = SolverConfig(),
                         primary: str | None = None) -> BasisSpec:
    """Greedily grow (k1, k2) while cond(Hessian at uniform) <= kappa_max.

    Each step considers the next standard and the next log moment, keeps
    those that stay under the condition limit, and takes the one whose
    sample value is closest to the uniform distribution's; ties go to the
    standard moment.
    """
    if primary is None:
        primary = choose_primary(moments)
    k = moments.order
    kmax2 = k if moments.has_log else 0
    H = uniform_hessian(moments, primary, config.n_c)

    cache = {}

    def cond(k1, k2):
        if (k1, k2) not in cache:
            idx = [0, *range(1, k1 + 1), *range(k + 1, k + 1 + k2)]
            ev = np.linalg.eigvalsh(H[np.ix_(idx, idx)])
            cache[k1, k2] = ev[-1] / ev[0] if ev[0] > 0 else math.inf
        return cache[k1, k2]

    k1 = k2 = 0
    while True:
        options = []
        if k1 < k and cond(k1 + 1, k2) <= config.kappa_max:
            options.append((abs(moments.standard[k1 + 1] - _uniform_moment(k1 + 1)), 0, (k1 + 1, k2)))
        if k2 < kmax2 and cond(k1, k2 + 1) <= config.kappa_max:
            options.append((abs(moments.log[k2 + 1] - _uniform_moment(k2 + 1)), 1, (k1, k2 + 1)))
        if not options:
            break
        k1, k2 = min(options)[2]
    if k1 + k2 == 0:
        if primary == LOG:
            k2 = 1
        else:
            k1 = 1
    if primary == LOG and k2 == 0:
        primary = STANDARD
    if primary == STANDARD and k1 == 0 and k2 > 0:
        primary = LOG
    return BasisSpec(k1, k2, moments.support, moments.log_support, primary)


class _Potential:
    """Potential, gradient and Hessian on the Lobatto grid for one basis."""

    def __init__(self, basis: BasisSpec, target_ext: np.ndarray, n_c: int):
        self.basis = basis
        self.n_c = n_c
        self.perm = basis.internal_order()
        self.mu = np.asarray(target_ext, dtype=float)[self.perm]
        v = cheb.lobatto_nodes(n_c)
        self.kp = basis.primary_count
        self.q = basis.other_count
        prim = cheb.chebvander(v, self.kp)
        if self.q:
            self.other = cheb.chebvander(basis.other_variable(v), 2 * self.q)
            self.B = np.vstack([prim, self.other[1: self.q + 1]])
        else:
            self.other = None
            self.B = prim
        self.A = cheb.product_integral_matrix(2 * self.kp, n_c)
        self.ints = cheb.t_integrals(n_c)
        self.w = cheb.clenshaw_curtis_weights(n_c)

    def _density(self, theta):
        z = theta @ self.B
        if z.max() > _EXP_CLIP:
            return None
        return np.exp(z)

    def value(self, theta) -> float:
        e = self._density(theta)
        if e is None:
            return math.inf
        return float(self.w @ e - theta @ self.mu)

    def evaluate(self, theta):
        """Return (L, grad, hess, density coefficients) in internal order."""
        e = self._density(theta)
        if e is None:
            return math.inf, None, None, None
        c = cheb.interp_coeffs(e)
        kp, q = self.kp, self.q
        G = self.A @ c  # int T_m e for m = 0..2kp
        K = kp + q + 1
        grad = np.empty(K)
        H = np.empty((K, K))
        grad[: kp + 1] = G[: kp + 1]
        ii = np.arange(kp + 1)
        H[: kp + 1, : kp + 1] = 0.5 * (G[ii[:, None] + ii[None, :]] + G[np.abs(ii[:, None] - ii[None, :])])
        if q:
            cw = cheb.interp_coeffs(self.other[1:] * e)  # rows m = 1..2q
            IW = np.concatenate(([G[0]], cw @ self.ints))
            cross = self.A[: kp + 1] @ cw[:q].T
            H[: kp + 1, kp + 1:] = cross
            H[kp + 1:, : kp + 1] = cross.T
            grad[kp + 1:] = IW[1: q + 1]
            jj = np.arange(1, q + 1)
            H[kp + 1:, kp + 1:] = 0.5 * (IW[jj[:, None] + jj[None, :]] + IW[np.abs(jj[:, None] - jj[None, :])])
        L = float(G[0] - theta @ self.mu)
        return L, grad - self.mu, H, c


def _newton_direction(H, g, config: SolverConfig):
    ridge = 0.0
    base = config.ridge * max(np.trace(H) / H.shape[0], 1e-300)
    for attempt in range(config.max_ridge_doublings + 1):
        try:
            factor = scipy.linalg.cho_factor(H + ridge * np.eye(H.shape[0]), check_finite=True)
            return scipy.linalg.cho_solve(factor, -g)
        except (np.linalg.LinAlgError, ValueError):
            ridge = base if ridge == 0.0 else 2.0 * ridge
    return None


@dataclass
class MaxEntDistribution:
    """A fitted maximum-entropy density (or a point mass for degenerate data)."""

    basis: BasisSpec | None
    theta: np.ndarray
    coeffs: np.ndarray
    converged: bool
    residual: float
    iterations: int = 0
    tail: float = 0.0
    point: float | None = None
    _cdf_coeffs: np.ndarray | None = field(default=None, repr=False)
    _total: float = field(default=1.0, repr=False)
    _grid: tuple | None = field(default=None, repr=False)

    def __post_init__(self):
        if self.point is None and self.coeffs is not None:
            self._cdf_coeffs = C.chebint(self.coeffs, lbnd=-1.0)
            self._total = float(C.chebval(1.0, self._cdf_coeffs))

    @classmethod
    def point_mass(cls, value: float) -> "MaxEntDistribution":
        return cls(None, np.zeros(1), None, True, 0.0, 0, point=float(value))

    @property
    def support(self) -> tuple[float, float]:
        if self.point is not None:
            return (self.point, self.point)
        return self.basis.support

    def _require(self):
        if not self.converged:
            raise EstimateUnavailableError(
                f"maximum-entropy solve did not converge (residual {self.residual:.3g})"
            )

    def pdf(self, x):
        """Density in the units of ``x``; zero outside the support."""
        self._require()
        x = np.asarray(x, dtype=float)
        if self.point is not None:
            return np.where(x == self.point, np.inf, 0.0)
        a, b = self.basis.support
        inside = (x >= a) & (x <= b)
        xs = np.clip(x, a, b)
        v = self.basis.to_primary(xs).ravel()
        D = self.basis.design(v)
        dens = np.exp(self.theta[self.basis.internal_order()] @ D).reshape(x.shape)
        return np.where(inside, dens * self.basis.primary_jacobian(xs), 0.0)

    def cdf(self, x):
        self._require()
        x = np.asarray(x, dtype=float)
        if self.point is not None:
            return np.where(x >= self.point, 1.0, 0.0)
        v = self.basis.to_primary(x)
        out = C.chebval(v, self._cdf_coeffs) / self._total
        a, b = self.basis.support
        out = np.where(x <= a, 0.0, np.where(x >= b, 1.0, out))
        return np.clip(out, 0.0, 1.0)

    def _cdf_primary(self, v: float) -> float:
        # cosine form of the series: one vectorized pass instead of Clenshaw
        j = np.arange(self._cdf_coeffs.shape[0])
        return float(np.cos(j * math.acos(min(1.0, max(-1.0, v)))) @ self._cdf_coeffs) / self._total

    def _bracket(self, phi: float) -> tuple[float, float]:
        if self._grid is None:
            v = -np.cos(np.pi * np.arange(257) / 256)
            self._grid = (v, np.maximum.accumulate(C.chebval(v, self._cdf_coeffs) / self._total))
        v, F = self._grid
        i = int(np.searchsorted(F, phi))
        return float(v[max(i - 1, 0)]), float(v[min(i, v.shape[0] - 1)])

    def quantile(self, phi: float) -> float:
        """Invert the cdf with Brent's method; ``phi`` in [0, 1]."""
        self._require()
        if not 0.0 <= phi <= 1.0:
            raise InvalidParameterError(f"phi must be in [0, 1], got {phi}")
        if self.point is not None:
            return self.point
        a, b = self.basis.support
        if phi == 0.0:
            return a
        if phi == 1.0:
            return b
        lo, hi = self._bracket(phi)
        f = lambda t: self._cdf_primary(t) - phi  # noqa: E731
        if f(lo) > 0:
            lo = -1.0
        if f(hi) < 0:
            hi = 1.0
        v = brentq(f, lo, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps)
        return float(self.basis.from_primary(v))

    def quantiles(self, phis: Sequence[float]) -> np.ndarray:
        return np.array([self.quantile(p) for p in phis])

    def chebyshev_moments(self, kind: str = STANDARD, order: int | None = None) -> np.ndarray:
        """E[T_j(s(x))] under the fitted density, by quadrature on the grid."""
        self._require()
        n_c = self.coeffs.shape[0] - 1
        v = cheb.lobatto_nodes(n_c)
        dens = C.chebval(v, self.coeffs) / self._total
        w = cheb.clenshaw_curtis_weights(n_c)
        order = order if order is not None else (self.basis.k1 if kind == STANDARD else self.basis.k2)
        if kind == self.basis.primary:
            var = v
        else:
            var = self.basis.other_variable(v)
        T = cheb.chebvander(var, order)
        return T @ (w * dens)


def solve_maxent(moments: ChebyshevMoments, config: SolverConfig = SolverConfig(),
                 basis: BasisSpec | None = None) -> MaxEntDistribution:
    """Minimize the potential with damped Newton; never raises on divergence.

    A density whose interpolant is not resolved on the grid is re-solved on
    a grid twice as fine, up to ``max_n_c``; the finer solve is warm-started
    only when the coarse one converged.
    """
    if basis is None:
        basis = select_moment_counts(moments, config)
    target = moments.target(basis)
    K = basis.size + 1
    theta0 = np.zeros(K)
    theta0[0] = -math.log(2.0)
    theta = theta0
    n_c = config.n_c
    total_it = 0
    while True:
        pot = _Potential(basis, target, n_c)
        theta, c, converged, residual, it = _newton(pot, theta, config)
        total_it += it
        coeffs = c if c is not None else np.zeros(n_c + 1)
        tail = _tail_ratio(coeffs)
        if not (tail > _MAX_TAIL and n_c < config.max_n_c):
            break
        n_c *= 2
        if not converged:
            theta = theta0
    if converged and tail > _MAX_TAIL:
        # the grid cannot resolve this density, so the matched moments are not trustworthy
        converged = False
    theta_ext = np.empty(K)
    theta_ext[pot.perm] = theta
    return MaxEntDistribution(basis, theta_ext, coeffs, converged, residual, total_it, tail=tail)


def _newton(pot: "_Potential", theta: np.ndarray, config: SolverConfig):
    converged = False
    residual = math.inf
    c = None
    it = 0
    for it in range(1, config.max_iterations + 1):
        L, g, H, c = pot.evaluate(theta)
        if g is None or not np.all(np.isfinite(g)):
            break
        residual = float(np.max(np.abs(g)))
        if residual <= config.tol:
            converged = True
            break
        d = _newton_direction(H, g, config)
        if d is None:
            break
        slope = float(g @ d)
        if slope >= 0:
            break
        if -slope < 1e-20:
            # inside the quadratic region the decrease is below rounding of L
            theta = theta + d
            continue
        step = 1.0
        accepted = False
        trial = pot.value(theta + d)
        if trial > L + config.ls_sufficient_decrease * slope and trial <= L + 1e-12 * max(1.0, abs(L)):
            # decrease lost in rounding of L: accept if the moment mismatch shrinks
            g_new = pot.evaluate(theta + d)[1]
            if g_new is not None and np.max(np.abs(g_new)) < residual:
                theta = theta + d
                continue
        for _ in range(config.max_backtracks):
            if pot.value(theta + step * d) <= L + config.ls_sufficient_decrease * step * slope:
                accepted = True
                break
            step *= config.ls_shrink
        if not accepted:
            break
        theta = theta + step * d
    return theta, c, converged, residual, it


def _tail_ratio(coeffs: np.ndarray) -> float:
    scale = np.max(np.abs(coeffs))
    if not np.isfinite(scale) or scale == 0:
        return math.inf
    return float(np.max(np.abs(coeffs[-4:])) / scale)


def fit_sketch(sketch: MomentsSketch, config: SolverConfig = SolverConfig(),
               basis: BasisSpec | None = None) -> MaxEntDistribution:
    """Sketch -> fitted distribution, handling point-mass data."""
    try:
        moments = to_chebyshev_moments(sketch)
    except DegenerateSupportError as exc:
        return MaxEntDistribution.point_mass(exc.value)
    return solve_maxent(moments, config, basis)


def pdf(dist: MaxEntDistribution, x):
    return dist.pdf(x)


def cdf(dist: MaxEntDistribution, x):
    return dist.cdf(x)


def estimate_quantile(dist: MaxEntDistribution, phi: float) -> float:
    return dist.quantile(phi)
