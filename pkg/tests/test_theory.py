import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from verigeo.errors import ParameterError
from verigeo.theory import normal_abs_cdf, psi_epsilon, table31, theory_bounds

NORMAL_IQR = 1.3489795003921634


def test_bounds_examples():
    lo, hi = theory_bounds(1.0)
    assert lo == pytest.approx(NORMAL_IQR, abs=1e-13)
    assert hi == pytest.approx(NORMAL_IQR, abs=1e-13)
    assert theory_bounds(0.5)[0] == 0.0
    assert theory_bounds(0.7)[1] == math.inf
    assert theory_bounds(1.0, sigma_eps=2.0)[0] == pytest.approx(2 * NORMAL_IQR)
    with pytest.raises(ParameterError):
        theory_bounds(0.0)


def test_bounds_monotone_in_qe():
    grid = np.round(np.arange(0.76, 1.0001, 0.01), 2)
    lo, hi = zip(*(theory_bounds(q) for q in grid))
    assert all(a <= b for a, b in zip(lo, lo[1:]))
    assert all(a >= b for a, b in zip(hi, hi[1:]))


def test_psi_limits():
    assert abs(psi_epsilon(1e6) - 1) < 1e-5
    assert psi_epsilon(1e-6) < 1e-5
    with pytest.raises(ParameterError):
        psi_epsilon(0.0)


def test_psi_riemann_oracle():
    step = 1e-5
    x = np.arange(0, 40, step) + step / 2
    vals = np.exp(-x) * np.vectorize(normal_abs_cdf)(x)
    assert psi_epsilon(1.0) == pytest.approx(vals.sum() * step, abs=1e-8)


@settings(max_examples=50, deadline=None)
@given(st.floats(1e-3, 1e3), st.floats(1.01, 3.0))
def test_psi_increasing(a, k):
    assert psi_epsilon(a) <= psi_epsilon(a * k) + 1e-12


def test_table31_examples():
    assert table31(100, 0.5) == (0.100, 0.010, 10.000)
    assert table31(1000, 0.8) == (0.251, 0.001, 251.189)
    assert table31(100, 0.1) == (0.016, 0.010, 1.585)
    with pytest.raises(ParameterError):
        table31(100, 1.0)


@settings(max_examples=100, deadline=None)
@given(st.integers(1, 10**6), st.floats(0.01, 0.99))
def test_table31_ratio_identity(n, c):
    ols_lb, vs_ub, re_lb = table31(n, c, rounded=False)
    assert re_lb == pytest.approx(ols_lb / vs_ub, rel=1e-12)
