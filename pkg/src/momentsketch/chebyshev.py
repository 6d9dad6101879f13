"""Chebyshev-series utilities shared by the solver and the bounds.

Series are stored as plain coefficient vectors ``c`` meaning
``sum(c[j] * T_j(u))`` on ``u in [-1, 1]``.
"""
from __future__ import annotations

import math
from functools import lru_cache

import numpy as np
from numpy.polynomial import chebyshev as C
from scipy.fft import dct


@lru_cache(maxsize=16)
def lobatto_nodes(n: int) -> np.ndarray:
    """``cos(pi*i/n)`` for i = 0..n (descending from 1 to -1)."""
    nodes = np.cos(np.pi * np.arange(n + 1) / n)
    nodes.flags.writeable = False
    return nodes


def interp_coeffs(values: np.ndarray) -> np.ndarray:
    """Chebyshev coefficients of the interpolant through Lobatto-node samples.

    ``values[..., i]`` is the function at ``lobatto_nodes(n)[i]``; the last
    axis has length n+1.  Uses a type-I DCT, O(n log n) per row.
    """
    n = values.shape[-1] - 1
    c = dct(values, type=1, axis=-1) / n
    c[..., 0] *= 0.5
    c[..., -1] *= 0.5
    return c


@lru_cache(maxsize=8)
def t_integrals(m: int) -> np.ndarray:
    """``int_{-1}^{1} T_j(u) du`` for j = 0..m."""
    j = np.arange(m + 1)
    out = np.zeros(m + 1)
    even = j % 2 == 0
    out[even] = 2.0 / (1.0 - j[even].astype(float) ** 2)
    out.flags.writeable = False
    return out


@lru_cache(maxsize=16)
def product_integral_matrix(m: int, n: int) -> np.ndarray:
    """A[a, l] = int T_a T_l du, so ``A @ c`` gives int T_a p du for a = 0..m.

    Uses T_a T_l = (T_{a+l} + T_{|a-l|}) / 2.
    """
    ints = t_integrals(m + n)
    a = np.arange(m + 1)[:, None]
    l = np.arange(n + 1)[None, :]
    A = 0.5 * (ints[a + l] + ints[np.abs(a - l)])
    A.flags.writeable = False
    return A


@lru_cache(maxsize=8)
def clenshaw_curtis_weights(n: int) -> np.ndarray:
    """Quadrature weights on ``lobatto_nodes(n)`` integrating the interpolant exactly."""
    w = interp_coeffs(np.eye(n + 1)).T @ t_integrals(n)
    w.flags.writeable = False
    return w


@lru_cache(maxsize=32)
def cheb_to_monomial(k: int) -> np.ndarray:
    """Row j holds the monomial coefficients of T_j, for j = 0..k."""
    out = np.zeros((k + 1, k + 1))
    for j in range(k + 1):
        e = np.zeros(j + 1)
        e[j] = 1.0
        out[j, : j + 1] = C.cheb2poly(e)
    out.flags.writeable = False
    return out


def shifted_moments(raw: np.ndarray, center: float, radius: float) -> np.ndarray:
    """Moments of ``(x - center) / radius`` from raw moments ``E[x^i]``, i = 0..k.

    Scales first, then shifts by binomial expansion with exactly rounded
    sums, mirroring the precision analysis for shifted power sums.
    """
    k = raw.shape[0] - 1
    scaled = [float(raw[i]) / radius ** i for i in range(k + 1)]
    shift = -center / radius
    out = np.empty(k + 1)
    for j in range(k + 1):
        out[j] = math.fsum(
            math.comb(j, i) * scaled[i] * shift ** (j - i) for i in range(j + 1)
        )
    return out


def chebyshev_moments_from_monomial(mono: np.ndarray) -> np.ndarray:
    """Convert ``E[u^i]`` (i = 0..k) to ``E[T_j(u)]`` (j = 0..k)."""
    k = mono.shape[0] - 1
    M = cheb_to_monomial(k)
    return np.array([math.fsum(M[j, : j + 1] * mono[: j + 1]) for j in range(k + 1)])


def chebvander(u: np.ndarray, deg: int) -> np.ndarray:
    """T_0..T_deg evaluated at ``u``; shape (deg+1, len(u))."""
    return C.chebvander(np.asarray(u, dtype=np.float64), deg).T
