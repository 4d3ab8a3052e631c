import math

import pytest


def geometric_moments(q: float) -> tuple[float, float]:
    """E[G], E[G^2] of a geometric(q) on {1, 2, ...} by direct summation."""
    m1 = m2 = 0.0
    n = 1
    tail = 1.0
    while tail > 1e-18:
        pmf = (1.0 - q) ** (n - 1) * q
        m1 += n * pmf
        m2 += n * n * pmf
        tail = (1.0 - q) ** n * n * n
        n += 1
    return m1, m2


@pytest.fixture
def geo():
    return geometric_moments


def within_se(observed: float, expected: float, se: float, k: float) -> bool:
    if se == 0.0 or math.isnan(se):
        return observed == expected
    return abs(observed - expected) <= k * se
