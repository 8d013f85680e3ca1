"""Variogram models, empirical variograms, WLS fitting and residual smoothing.

Semivariances follow ``gamma(0) = 0`` and, for ``h > 0``,
``gamma(h) = nugget + psill * (1 - rho(h))`` with ``rho`` the correlation of
the family.  The matching covariance is ``C(h) = sill - gamma(h)``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.optimize import minimize
from scipy.spatial import ConvexHull, QhullError
from scipy.spatial.distance import cdist, pdist
from scipy.special import gammaln, kve

from . import kernels
from .dataset import SpatialDataset
from .errors import DimensionError, DomainError, EstimationError, FitError, ParameterError
from .regression import RegressionFit
from .veracity import VeracityConfig, VeracityScores

FAMILIES = ("exponential", "matern")
ESTIMATORS = ("matheron", "cressie_hawkins")
NU_GRID = (0.5, 1.0, 1.5, 2.5, 5.0)
DEFAULT_BINS = 15
MIN_PAIRS = 30
N_STARTS = 10


@dataclass(frozen=True)
class VariogramModel:
    family: str = "exponential"
    nugget: float = 0.0
    psill: float = 1.0
    range: float = 1.0
    smoothness: float | None = None

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ParameterError(f"unknown family {self.family!r}; expected one of {FAMILIES}")
        if not (self.nugget >= 0 and self.psill >= 0):
            raise ParameterError("nugget and psill must be non-negative")
        if not self.range > 0:
            raise ParameterError(f"range must be positive, got {self.range}")
        if self.family == "matern":
            if self.smoothness is None or not self.smoothness > 0:
                raise ParameterError("matern needs a positive smoothness")
        elif self.smoothness is not None:
            object.__setattr__(self, "smoothness", None)

    @property
    def sill(self) -> float:
        return self.nugget + self.psill

    def as_dict(self) -> dict:
        d = {"family": self.family, "nugget": self.nugget, "psill": self.psill, "range": self.range}
        if self.smoothness is not None:
            d["smoothness"] = self.smoothness
        return d


def matern_correlation(h, nu: float, rng: float = 1.0) -> np.ndarray:
    """Matern correlation ``2^(1-nu)/Gamma(nu) (h/rng)^nu K_nu(h/rng)``.

    Evaluated in log space with the exponentially scaled Bessel function so
    that neither the power nor ``K_nu`` overflows; ``h = 0`` gives 1.
    """
    x = np.asarray(h, dtype=float) / rng
    out = np.ones_like(x)
    pos = x > 0
    xp = x[pos]
    with np.errstate(divide="ignore"):
        logc = ((1.0 - nu) * math.log(2.0) - gammaln(nu) + nu * np.log(xp)
                + np.log(kve(nu, xp)) - xp)
    out[pos] = np.minimum(np.exp(logc), 1.0)
    return out


def correlation(model: VariogramModel, h) -> np.ndarray:
    """Correlation of the partial-sill component at lag ``h`` (1 at ``h = 0``)."""
    h = np.asarray(h, dtype=float)
    if model.family == "exponential":
        return np.exp(-h / model.range)
    return matern_correlation(h, model.smoothness, model.range)


def semivariance(model: VariogramModel, h):
    """``gamma(h)``; scalar in, scalar out.

    Raises
    ------
    DomainError
        For negative or NaN lags.
    """
    arr = np.asarray(h, dtype=float)
    if np.any(~(arr >= 0)):
        raise DomainError("lags must be non-negative")
    g = np.where(arr > 0, model.nugget + model.psill * (1.0 - correlation(model, arr)), 0.0)
    return float(g) if g.ndim == 0 else g


def covariance(model: VariogramModel, h):
    """``C(h) = sill - gamma(h)``."""
    g = semivariance(model, h)
    return model.sill - g


def covariance_matrix(model: VariogramModel, coords, other=None) -> np.ndarray:
    """Covariance between point sets.

    With ``other`` omitted this is the ``n x n`` matrix of ``coords``: the
    nugget sits on the diagonal only, so coincident but distinct
    observations share just the partial sill.  Cross-covariances to
    ``other`` use ``C(h) = sill - gamma(h)``, which gives a target that
    coincides with a data point the full sill.
    """
    coords = np.asarray(coords, dtype=float)
    if other is None:
        d = cdist(coords, coords)
        c = model.psill * correlation(model, d)
        c[np.diag_indices_from(c)] += model.nugget
        return c
    d = cdist(coords, np.asarray(other, dtype=float))
    return model.sill - semivariance(model, d)


def max_pair_distance(coords) -> float:
    """Largest distance between two points (via the convex hull when possible)."""
    coords = np.asarray(coords, dtype=float)
    if coords.shape[0] < 2:
        return 0.0
    pts = coords
    if coords.shape[0] > 50:
        try:
            pts = coords[ConvexHull(coords).vertices]
        except QhullError:
            pts = coords
    return float(pdist(pts).max())


@dataclass(frozen=True, eq=False)
class EmpiricalVariogram:
    """Binned semivariance estimates; only bins holding at least one pair are kept."""

    bin_centers: np.ndarray
    gamma_hat: np.ndarray
    pair_counts: np.ndarray
    estimator: str
    edges: np.ndarray = field(repr=False)
    variance: float = 0.0  # sample variance of the residuals
    max_distance: float = 0.0  # largest pairwise distance of the locations

    def __len__(self):
        return self.bin_centers.size

    def as_dict(self) -> dict:
        return {"estimator": self.estimator,
                "bin_centers": self.bin_centers.tolist(),
                "gamma_hat": self.gamma_hat.tolist(),
                "pair_counts": self.pair_counts.tolist()}


def empirical_variogram(coords, residuals, bins=DEFAULT_BINS, estimator: str = "cressie_hawkins",
                        max_lag: float | None = None) -> EmpiricalVariogram:
    """Matheron or Cressie-Hawkins semivariances over distance bins.

    Parameters
    ----------
    coords : (n, 2) array
    residuals : (n,) array
    bins : int or array of edges
        Number of equal-width bins on ``[0, max_lag]`` or explicit
        increasing edges.  Bin j holds pairs with ``e_j < d <= e_{j+1}``
        (the first bin also takes ``d == e_0``).
    estimator : {"matheron", "cressie_hawkins"}
    max_lag : float, optional
        Upper edge for integer ``bins``; half the largest pairwise distance
        by default.
    """
    coords = np.asarray(coords, dtype=float)
    resid = np.asarray(residuals, dtype=float)
    if coords.ndim != 2 or coords.shape[1] != 2 or resid.shape != (coords.shape[0],):
        raise DimensionError("coords must be (n, 2) and residuals (n,)")
    if coords.shape[0] < 2:
        raise DomainError("an empirical variogram needs at least two points")
    if estimator not in ESTIMATORS:
        raise ParameterError(f"unknown estimator {estimator!r}; expected one of {ESTIMATORS}")
    dmax = max_pair_distance(coords)
    if np.ndim(bins) == 0:
        nb = int(bins)
        if nb < 1:
            raise ParameterError("need at least one bin")
        top = 0.5 * dmax if max_lag is None else float(max_lag)
        if not top > 0:
            raise EstimationError("all points coincide; no positive lags")
        edges = np.linspace(0.0, top, nb + 1)
    else:
        edges = np.asarray(bins, dtype=float)
        if edges.ndim != 1 or edges.size < 2 or np.any(np.diff(edges) <= 0):
            raise ParameterError("bin edges must be strictly increasing")
    count, sum_d, sum_sq, sum_sqrt = kernels.pair_bins(coords, resid, edges)
    keep = count > 0
    if not keep.any():
        raise EstimationError("every lag bin is empty")
    n = count[keep].astype(float)
    if estimator == "matheron":
        gamma = sum_sq[keep] / (2.0 * n)
    else:
        gamma = (sum_sqrt[keep] / n) ** 4 / (2.0 * (0.457 + 0.494 / n))
    var = float(np.var(resid, ddof=1))
    out = EmpiricalVariogram(sum_d[keep] / n, gamma, count[keep], estimator, edges, var, dmax)
    for a in (out.bin_centers, out.gamma_hat, out.pair_counts, out.edges):
        a.setflags(write=False)
    return out


def wls_objective(model: VariogramModel, emp: EmpiricalVariogram) -> float:
    """Cressie's weighted criterion ``sum_j N_j (gamma_hat_j / gamma_j - 1)^2``."""
    g = semivariance(model, emp.bin_centers)
    with np.errstate(divide="ignore", invalid="ignore"):
        r = emp.gamma_hat / g - 1.0
    val = float(np.sum(emp.pair_counts * r * r))
    return val if math.isfinite(val) else math.inf


def default_bounds(emp: EmpiricalVariogram) -> tuple[tuple[float, float], ...]:
    """Box for (nugget, psill, range)."""
    top = max(10.0 * emp.variance, 10.0 * float(np.max(emp.gamma_hat)), 1e-6)
    diam = max(emp.max_distance, float(emp.bin_centers.max()), 2e-3)
    return ((1e-8, top), (1e-8, top), (1e-3, diam))


def _retained(emp: EmpiricalVariogram, min_pairs: int, k: int) -> EmpiricalVariogram:
    keep = emp.pair_counts >= min_pairs
    if keep.sum() < k:
        # too few well-populated bins: use every non-empty one rather than fail
        keep = np.ones(len(emp), dtype=bool)
    if keep.sum() < k:
        raise EstimationError(f"need at least {k} non-empty lag bins, have {int(keep.sum())}")
    return replace(emp, bin_centers=emp.bin_centers[keep], gamma_hat=emp.gamma_hat[keep],
                   pair_counts=emp.pair_counts[keep])


def _objective_factory(emp: EmpiricalVariogram, family: str, nu: float | None):
    """Fast closure for the WLS criterion over log parameters.

    Equivalent to ``wls_objective`` on the model built from ``exp(u)``
    but skips model construction and validation inside the optimizer loop.
    """
    h = np.asarray(emp.bin_centers, dtype=float)
    n = np.asarray(emp.pair_counts, dtype=float)
    g_hat = np.asarray(emp.gamma_hat, dtype=float)
    pos = h > 0
    logh = np.log(np.where(pos, h, 1.0))
    if family == "matern":
        const = (1.0 - nu) * math.log(2.0) - gammaln(nu)

    def f(u):
        nug, ps, rg = np.exp(u)
        x = h / rg
        if family == "exponential":
            corr = np.exp(-x)
        else:
            with np.errstate(divide="ignore", over="ignore"):
                corr = np.minimum(np.exp(const + nu * (logh - math.log(rg))
                                         + np.log(kve(nu, x)) - x), 1.0)
        g = np.where(pos, nug + ps * (1.0 - corr), 0.0)
        with np.errstate(divide="ignore", invalid="ignore"):
            r = g_hat / g - 1.0
        val = float(np.dot(n, r * r))
        return val if math.isfinite(val) else math.inf

    return f


def _fit_fixed_nu(emp, family, nu, starts, lo, hi, maxiter):
    f = _objective_factory(emp, family, nu)
    best_u, best_f = None, math.inf
    for u0 in starts:
        u0 = np.clip(u0, lo, hi)
        f0 = f(u0)
        if f0 < best_f:
            best_u, best_f = u0, f0
        res = minimize(f, u0, method="Nelder-Mead", bounds=list(zip(lo, hi)),
                       options={"maxiter": maxiter, "xatol": 1e-7, "fatol": 1e-10})
        if math.isfinite(res.fun) and res.fun < best_f:
            best_u, best_f = res.x, float(res.fun)
    if best_u is None:
        return None, math.inf
    nug, ps, rg = np.exp(np.clip(best_u, lo, hi)).tolist()
    return VariogramModel(family, nug, ps, rg, nu), best_f


def fit_variogram_wls(emp: EmpiricalVariogram, family: str = "exponential",
                      init: VariogramModel | None = None, bounds=None,
                      smoothness: float | None = None, nu_grid=NU_GRID,
                      n_starts: int = N_STARTS, seed: int = 0, min_pairs: int = MIN_PAIRS,
                      maxiter: int = 2000) -> VariogramModel:
    """Fit a parametric variogram by Cressie's weighted least squares.

    Nelder-Mead runs on log parameters inside the box ``bounds`` (default
    :func:`default_bounds`) from ``n_starts`` starts: a moment-based guess,
    ``init`` if given, and uniform draws in the log box from ``seed``.  Bins
    with fewer than ``min_pairs`` pairs are ignored.  For the Matern family
    ``smoothness=None`` profiles the smoothness over ``nu_grid``.

    Raises
    ------
    FitError
        If the objective is non-finite at every start.
    """
    if family not in FAMILIES:
        raise ParameterError(f"unknown family {family!r}; expected one of {FAMILIES}")
    if n_starts < 1:
        raise ParameterError("n_starts must be at least 1")
    emp = _retained(emp, min_pairs, 3)
    bounds = bounds or default_bounds(emp)
    lo = np.log([b[0] for b in bounds])
    hi = np.log([b[1] for b in bounds])
    if np.any(~(lo < hi)):
        raise ParameterError(f"empty parameter box {bounds}")
    g = emp.gamma_hat
    guess = np.log([max(float(g[0]) * 0.5, bounds[0][0]),
                    max(float(g.max() - 0.5 * g[0]), bounds[1][0]),
                    max(float(emp.bin_centers.max()) / 3.0, bounds[2][0])])
    starts = [guess]
    if init is not None:
        starts.append(np.log([max(init.nugget, bounds[0][0]), max(init.psill, bounds[1][0]),
                              init.range]))
    rng = np.random.default_rng(seed)
    while len(starts) < n_starts:
        starts.append(rng.uniform(lo, hi))

    if family == "exponential":
        nus = [None]
    elif smoothness is not None:
        nus = [float(smoothness)]
    else:
        nus = list(nu_grid)
    best, best_f = None, math.inf
    for nu in nus:
        model, fval = _fit_fixed_nu(emp, family, nu, starts, lo, hi, maxiter)
        if model is not None and fval < best_f:
            best, best_f = model, fval
    if best is None:
        raise FitError("variogram objective is not finite at any start", best_objective=best_f)
    return best


@dataclass(frozen=True)
class SmoothingConfig:
    q: float = 1.0
    veracity: VeracityConfig = field(default_factory=VeracityConfig)

    def __post_init__(self):
        if not self.q >= 0:
            raise ParameterError(f"q must be non-negative, got {self.q}")


def smooth_residuals(dataset: SpatialDataset, fit: RegressionFit, scores: VeracityScores,
                     config: SmoothingConfig | None = None) -> np.ndarray:
    """Shrink residuals of low-score observations toward their local median.

    ``eps_i <- V_i^q eps_i + (1 - V_i^q) median(eps_j : j in N_i)`` with the
    neighborhoods ``N_i`` that produced the scores.
    """
    cfg = config or SmoothingConfig()
    resid = np.asarray(fit.residuals, dtype=float)
    v = np.asarray(scores.scores, dtype=float)
    if resid.shape != (dataset.n,) or v.shape != (dataset.n,):
        raise DimensionError("fit, scores and dataset must describe the same observations")
    local, _ = kernels.neighborhood_summaries(resid, scores.indptr, scores.indices,
                                              kernels.MEDIAN_IQR)
    w = v ** cfg.q
    out = w * resid + (1.0 - w) * local
    # keep the convex combination inside its endpoints despite rounding
    return np.clip(out, np.minimum(resid, local), np.maximum(resid, local))
