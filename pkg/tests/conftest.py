import numpy as np
import pytest


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def brute_rank(data, t):
    """#{x in data : x < t}"""
    return int(np.sum(np.asarray(data) < t))


def empirical_quantile(data, phi):
    """Element of rank floor(phi * n)."""
    s = np.sort(np.asarray(data, dtype=float))
    return s[int(np.floor(phi * s.shape[0]))]


def field_scale(values, order):
    """sum |x|^i per order, the natural scale for comparing power sums."""
    x = np.abs(np.asarray(values, dtype=float))
    return np.array([np.sum(x ** i) for i in range(1, order + 1)])
