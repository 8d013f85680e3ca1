"""Trend estimation: OLS, veracity-weighted least squares and iterated GLS."""
from __future__ import annotations

from dataclasses import dataclass
from typing import TYPE_CHECKING

import numpy as np
from scipy.linalg import LinAlgError, cho_factor, cho_solve, solve_triangular

from .dataset import SpatialDataset
from .errors import CovarianceError, DimensionError, ParameterError, SingularityError

if TYPE_CHECKING:  # pragma: no cover
    from .covariance import VariogramModel

#: Largest acceptable condition estimate of a Gram matrix.
MAX_CONDITION = 1e12
METHODS = ("ols", "vs_wls", "egls")


@dataclass(frozen=True, eq=False)
class RegressionFit:
    """Fitted trend coefficients.

    ``residuals`` is always ``values - covariates @ beta``; ``weights`` is
    the observation weight diagonal (all ones for OLS and EGLS).
    """

    beta: np.ndarray
    weights: np.ndarray
    residuals: np.ndarray
    method: str
    gram_condition: float

    def predict(self, covariates) -> np.ndarray:
        return np.asarray(covariates, dtype=float) @ self.beta


@dataclass(frozen=True)
class SolveReport:
    iterations: int
    converged: bool
    beta_delta: float


def _spd_solve(gram: np.ndarray, rhs: np.ndarray) -> tuple[np.ndarray, float]:
    """Solve ``gram @ b = rhs`` by Cholesky; return (b, condition estimate).

    The condition estimate is the squared ratio of the extreme diagonal
    entries of the Cholesky factor, a cheap lower bound on cond(gram).
    """
    # equilibrate so that badly scaled columns do not masquerade as rank loss
    scale = np.sqrt(np.diag(gram))
    if np.any(~np.isfinite(scale)) or np.any(scale <= 0):
        raise SingularityError("Gram matrix has a zero column", condition=np.inf)
    g = gram / np.outer(scale, scale)
    try:
        c, low = cho_factor(g, lower=True, check_finite=False)
    except LinAlgError:
        raise SingularityError("Gram matrix is not positive definite", condition=np.inf) from None
    d = np.abs(np.diag(c))
    cond = float((d.max() / d.min()) ** 2) if d.min() > 0 else np.inf
    if not cond < MAX_CONDITION:
        raise SingularityError(f"Gram matrix is numerically singular (condition ~ {cond:.3g})",
                               condition=cond)
    b = cho_solve((c, low), rhs / scale, check_finite=False) / scale
    return b, cond


def _finish(dataset: SpatialDataset, beta, weights, method, cond) -> RegressionFit:
    resid = dataset.values - dataset.covariates @ beta
    for a in (beta, weights, resid):
        a.setflags(write=False)
    return RegressionFit(beta, weights, resid, method, cond)


def fit_ols(dataset: SpatialDataset) -> RegressionFit:
    """Ordinary least squares ``(X'X)^{-1} X'Z``."""
    fit = fit_weighted(dataset, np.ones(dataset.n))
    return RegressionFit(fit.beta, fit.weights, fit.residuals, "ols", fit.gram_condition)


def fit_weighted(dataset: SpatialDataset, weights) -> RegressionFit:
    """Weighted least squares ``(X'D X)^{-1} X'D Z`` with ``D = diag(weights)``.

    With veracity scores as weights this is the VS-weighted estimator.

    Raises
    ------
    ParameterError
        If any weight is not a positive finite number.
    SingularityError
        If the weighted Gram matrix is numerically singular.
    """
    w = np.array(weights, dtype=float)
    if w.shape != (dataset.n,):
        raise DimensionError(f"weights has shape {w.shape}, expected ({dataset.n},)")
    if not np.all(np.isfinite(w)) or np.any(w <= 0):
        raise ParameterError("weights must be positive and finite")
    X = dataset.covariates
    Xw = X * w[:, None]
    beta, cond = _spd_solve(Xw.T @ X, Xw.T @ dataset.values)
    return _finish(dataset, beta, w, "vs_wls", cond)


def fit_gls(dataset: SpatialDataset, model: "VariogramModel") -> RegressionFit:
    """Generalized least squares with the covariance implied by ``model``."""
    from .covariance import covariance_matrix

    sigma = covariance_matrix(model, dataset.coords)
    try:
        L = np.linalg.cholesky(sigma)
    except np.linalg.LinAlgError:
        sigma[np.diag_indices_from(sigma)] += 1e-10 * max(model.sill, 1.0)
        try:
            L = np.linalg.cholesky(sigma)
        except np.linalg.LinAlgError:
            raise CovarianceError(f"covariance of {model} is not positive definite "
                                  "on these locations") from None
    # whiten: L^{-1} X and L^{-1} Z turn GLS into OLS
    Xt = solve_triangular(L, dataset.covariates, lower=True, check_finite=False)
    zt = solve_triangular(L, dataset.values, lower=True, check_finite=False)
    beta, cond = _spd_solve(Xt.T @ Xt, Xt.T @ zt)
    return _finish(dataset, beta, np.ones(dataset.n), "egls", cond)


def fit_egls(dataset: SpatialDataset, model: "VariogramModel", max_iter: int = 20,
             tol: float = 1e-6, refit: bool = True, variogram_options: dict | None = None,
             initial_model_fitted: bool = False) -> tuple[RegressionFit, SolveReport]:
    """Estimated GLS: alternate GLS solves and variogram refits on residuals.

    Starts from the OLS residuals when ``refit`` is true, fitting the
    variogram family of ``model`` (which also serves as the first start);
    with ``refit=False`` the covariance stays fixed at ``model`` and a single
    GLS solve is done.  Iteration stops once the sup-norm change of beta
    drops below ``tol`` or after ``max_iter`` GLS solves.  Pass
    ``initial_model_fitted=True`` when ``model`` was already fitted to the
    OLS residuals to skip that first refit.

    Returns
    -------
    (RegressionFit, SolveReport)
        The final fit and the convergence report.
    """
    from .covariance import empirical_variogram, fit_variogram_wls

    if max_iter < 1:
        raise ParameterError("max_iter must be at least 1")
    if not refit:
        fit = fit_gls(dataset, model)
        return fit, SolveReport(1, True, 0.0)
    opts = dict(variogram_options or {})
    beta = fit_ols(dataset).beta
    resid = dataset.values - dataset.covariates @ beta
    current = model
    delta = np.inf
    for it in range(1, max_iter + 1):
        if it > 1 or not initial_model_fitted:
            emp = empirical_variogram(dataset.coords, resid, **opts.get("empirical", {}))
            current = fit_variogram_wls(emp, current.family, init=current,
                                        smoothness=current.smoothness, **opts.get("fit", {}))
        fit = fit_gls(dataset, current)
        delta = float(np.max(np.abs(fit.beta - beta)))
        beta = fit.beta
        resid = fit.residuals
        if delta < tol:
            return fit, SolveReport(it, True, delta)
    return fit, SolveReport(max_iter, False, delta)
