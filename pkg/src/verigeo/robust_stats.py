"""Order statistics and moment summaries over small vectors.

Quantiles follow the inverse-ECDF ("type 1") rule: the p-th quantile is the
smallest sample value v with #{x <= v} / n >= p.  The result is always an
element of the sample.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Literal

import numpy as np

from .errors import DomainError, ParameterError

Variant = Literal["median_iqr", "mean_sd"]
VARIANTS = ("median_iqr", "mean_sd")


@dataclass(frozen=True)
class SummaryPair:
    center: float
    dispersion: float
    variant: str


def type1_rank(n: int, p: float) -> int:
    """0-based index of the type-1 p-quantile in a sorted sample of size n."""
    if p <= 0.0:
        return 0
    k = math.ceil(n * p)
    # guard against n*p rounding up past an exact integer
    if k > 1 and (k - 1) / n >= p:
        k -= 1
    return min(max(k, 1), n) - 1


def _check(values):
    x = np.asarray(values, dtype=float).ravel()
    if x.size == 0:
        raise DomainError("empty vector")
    if not np.all(np.isfinite(x)):
        raise DomainError("vector contains non-finite values")
    return x


def quantile(values, p: float) -> float:
    """Smallest sample value v such that the ECDF at v is at least ``p``."""
    if not 0.0 <= p <= 1.0:
        raise ParameterError(f"p must lie in [0, 1], got {p}")
    x = np.sort(_check(values))
    return float(x[type1_rank(x.size, p)])


def summarize(values, variant: str = "median_iqr") -> SummaryPair:
    """(center, dispersion) of ``values``.

    ``median_iqr`` gives (Q2, Q3 - Q1); ``mean_sd`` gives the mean and the
    n-1 divisor standard deviation (0 for a single value).
    """
    x = _check(values)
    if variant == "median_iqr":
        s = np.sort(x)
        n = s.size
        q1, q2, q3 = (s[type1_rank(n, p)] for p in (0.25, 0.5, 0.75))
        return SummaryPair(float(q2), float(q3 - q1), variant)
    if variant == "mean_sd":
        m = float(np.mean(x))
        sd = float(np.std(x, ddof=1)) if x.size > 1 else 0.0
        return SummaryPair(m, sd, variant)
    raise ParameterError(f"unknown variant {variant!r}; expected one of {VARIANTS}")
