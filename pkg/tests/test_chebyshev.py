import math

import mpmath
import numpy as np
import pytest
from numpy.polynomial import chebyshev as C
from scipy.integrate import quad

from momentsketch import chebyshev as cheb


def test_lobatto_nodes():
    v = cheb.lobatto_nodes(8)
    assert v[0] == 1.0 and v[-1] == -1.0
    np.testing.assert_allclose(v, np.cos(np.pi * np.arange(9) / 8))


def test_interp_coeffs_reproduce_polynomial(rng):
    c = rng.normal(size=12)
    v = cheb.lobatto_nodes(32)
    got = cheb.interp_coeffs(C.chebval(v, c))
    np.testing.assert_allclose(got[:12], c, atol=1e-13)
    np.testing.assert_allclose(got[12:], 0, atol=1e-13)


def test_interp_matches_numpy_interpolant():
    f = lambda u: np.exp(np.sin(3 * u))  # noqa: E731
    c = cheb.interp_coeffs(f(cheb.lobatto_nodes(64)))
    u = np.linspace(-1, 1, 101)
    np.testing.assert_allclose(C.chebval(u, c), f(u), atol=1e-12)


def test_clenshaw_curtis_exact_on_polynomials():
    w = cheb.clenshaw_curtis_weights(16)
    v = cheb.lobatto_nodes(16)
    for j in range(17):
        np.testing.assert_allclose(w @ v ** j, (1 + (-1) ** j) / (j + 1), atol=1e-14)


def test_product_integral_matrix_against_quadrature():
    A = cheb.product_integral_matrix(4, 6)
    for a in range(5):
        for l in range(7):
            ref = quad(lambda u: C.chebval(u, np.eye(a + 1)[a]) * C.chebval(u, np.eye(l + 1)[l]), -1, 1)[0]
            assert A[a, l] == pytest.approx(ref, abs=1e-12)


def test_cheb_to_monomial():
    M = cheb.cheb_to_monomial(4)
    np.testing.assert_array_equal(M[4], [1, 0, -8, 0, 8])
    np.testing.assert_array_equal(M[3], [0, -3, 0, 4, 0])


def test_shifted_moments_against_arbitrary_precision(rng):
    x = rng.uniform(1, 3, size=200)
    k = 10
    raw = np.array([1.0] + [np.mean(x ** i) for i in range(1, k + 1)])
    got = cheb.chebyshev_moments_from_monomial(cheb.shifted_moments(raw, 2.0, 1.0))
    with mpmath.workdps(60):
        ref = [mpmath.fsum(mpmath.chebyt(j, mpmath.mpf(float(v)) - 2) for v in x) / len(x) for j in range(k + 1)]
    np.testing.assert_allclose(got, [float(r) for r in ref], atol=3.0 ** -k)


def test_chebvander_shape():
    assert cheb.chebvander(np.zeros(5), 3).shape == (4, 5)
    np.testing.assert_array_equal(cheb.chebvander(np.array([0.0]), 4)[:, 0], [1, 0, -1, 0, 1])
