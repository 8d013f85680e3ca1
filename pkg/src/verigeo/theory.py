"""Closed-form calculators from the large-sample analysis of the scores."""
from __future__ import annotations

import math
from typing import Callable

from scipy.integrate import quad
from scipy.stats import norm

from .errors import ParameterError

TAIL_START = 40.0


def theory_bounds(q_e: float, sigma_eps: float = 1.0,
                  ppf: Callable[[float], float] | None = None) -> tuple[float, float]:
    """Bounds ``(C_l, C_u)`` on the population IQR of a contaminated neighborhood.

    ``C_l = sigma (F^-1(max(1 - 0.25/q, 0)) - F^-1(min(0.25/q, 1)))`` and
    ``C_u = sigma (F^-1(min(0.75/q, 1)) - F^-1(max(1 - 0.75/q, 0)))`` where
    ``F`` is the marginal distribution of the standardized field
    (standard normal unless ``ppf`` is given).  Infinite quantiles at 0 or 1
    propagate, so ``C_u = inf`` once ``q <= 0.75``.
    """
    if not 0 < q_e <= 1:
        raise ParameterError(f"q_e must lie in (0, 1], got {q_e}")
    f = ppf or (lambda p: float(norm.ppf(p)))
    lower = sigma_eps * (f(max(1.0 - 0.25 / q_e, 0.0)) - f(min(0.25 / q_e, 1.0)))
    upper = sigma_eps * (f(min(0.75 / q_e, 1.0)) - f(max(1.0 - 0.75 / q_e, 0.0)))
    return lower, upper


def normal_abs_cdf(t: float) -> float:
    """CDF of ``|N(0, 1)|``."""
    return math.erf(t / math.sqrt(2.0)) if t > 0 else 0.0


def psi_epsilon(a: float, abs_cdf: Callable[[float], float] = normal_abs_cdf) -> float:
    """``psi(a) = int_0^inf exp(-x) P(|eps| < a x) dx``.

    Adaptive quadrature on ``[0, 40]``; beyond 40 the integrand lies between
    ``exp(-x) P(|eps| < 40 a)`` and ``exp(-x)``, so the lower end of that
    bracket is added (error below ``exp(-40)``).
    """
    if not a > 0:
        raise ParameterError(f"a must be positive, got {a}")

    def integrand(x):
        return math.exp(-x) * abs_cdf(a * x)

    # the CDF changes on the scale 1/a; tell quad where that is
    knee = 5.0 / a
    points = [knee] if knee < TAIL_START else None
    val, _ = quad(integrand, 0.0, TAIL_START, points=points, epsabs=1e-14, epsrel=1e-10,
                  limit=200)
    return val + math.exp(-TAIL_START) * abs_cdf(a * TAIL_START)


def table31(n: int, c: float, rounded: bool = True) -> tuple[float, float, float]:
    """Orders ``(n^(c-1), 1/n, n^c)`` of the OLS lower bound, VS upper bound
    and their ratio when a fraction of observations has noise variance ``~ n^c``.
    """
    if n < 1:
        raise ParameterError("n must be at least 1")
    if not 0 < c < 1:
        raise ParameterError(f"c must lie in (0, 1), got {c}")
    ols_lb = float(n) ** (c - 1.0)
    vs_ub = 1.0 / n
    re_lb = float(n) ** c
    if rounded:
        return round(ols_lb, 3), round(vs_ub, 3), round(re_lb, 3)
    return ols_lb, vs_ub, re_lb
