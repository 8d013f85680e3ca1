"""Ordinary kriging, the scoring-to-prediction pipeline and leave-one-out validation."""
from __future__ import annotations

import os
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
from scipy.linalg import LinAlgError, cho_factor, cho_solve

from .covariance import (SmoothingConfig, VariogramModel, covariance_matrix, empirical_variogram,
                         fit_variogram_wls, smooth_residuals, EmpiricalVariogram)
from .dataset import CsvSchema, DesignSpec, Location, SpatialDataset, read_csv
from .errors import (CovarianceError, DimensionError, DomainError, InputError, NumericalError,
                     ParameterError)
from .regression import RegressionFit, fit_ols, fit_weighted
from .veracity import VeracityConfig, VeracityScores, score_all

#: Two-sided 95% standard normal quantile.
Z975 = 1.959963984540054
JITTER = 1e-10


@dataclass(frozen=True)
class KrigingPrediction:
    location: Location
    predicted: float
    kriging_variance: float
    margin: float
    weight_sum: float = 1.0


def _as_coords(points) -> np.ndarray:
    if len(points) and isinstance(points[0], Location):
        return np.array([[p.x, p.y] for p in points], dtype=float)
    return np.asarray(points, dtype=float).reshape(-1, 2)


def _factor(c: np.ndarray, sill: float, coords: np.ndarray):
    try:
        return cho_factor(c, lower=True, check_finite=False)
    except LinAlgError:
        pass
    c = c.copy()
    c[np.diag_indices_from(c)] += JITTER * max(sill, np.finfo(float).tiny)
    try:
        return cho_factor(c, lower=True, check_finite=False)
    except LinAlgError:
        _, inv, counts = np.unique(coords, axis=0, return_inverse=True, return_counts=True)
        dup = np.flatnonzero(counts[inv.ravel()] > 1)
        where = (f"coincident training locations at indices {dup[:10].tolist()}"
                 if dup.size else "degenerate training geometry")
        raise CovarianceError(f"kriging matrix is singular: {where}") from None


def krige_arrays(train_coords, train_values, model: VariogramModel, targets):
    """Vectorized ordinary kriging.

    Returns ``(predicted, variance, weights)`` with ``weights`` of shape
    ``(n_targets, n_train)``.  Uses the covariance form: with
    ``a = C^{-1} 1`` and ``b = C^{-1} c0`` the Lagrange multiplier is
    ``m = (1'b - 1) / 1'a``, the weights ``b - m a`` and the variance
    ``C(0) - lambda'c0 - m``.
    """
    xs = np.asarray(train_coords, dtype=float)
    z = np.asarray(train_values, dtype=float)
    t = _as_coords(targets)
    if xs.ndim != 2 or xs.shape[1] != 2 or z.shape != (xs.shape[0],):
        raise DimensionError("training coords must be (n, 2) with n values")
    if xs.shape[0] < 2:
        raise DomainError("kriging needs at least two training points")
    if not model.sill > 0:
        raise CovarianceError(f"{model} has zero sill; the kriging system is undefined")
    C = covariance_matrix(model, xs)
    c0 = covariance_matrix(model, xs, t)  # (n, m)
    fac = _factor(C, model.sill, xs)
    a = cho_solve(fac, np.ones(xs.shape[0]), check_finite=False)
    b = cho_solve(fac, c0, check_finite=False)
    m = (b.sum(axis=0) - 1.0) / a.sum()
    lam = b - np.outer(a, m)
    pred = lam.T @ z
    var = model.sill - np.einsum("ij,ij->j", lam, c0) - m
    return pred, np.maximum(var, 0.0), lam.T


def krige(train_coords, train_values, model: VariogramModel, targets) -> list[KrigingPrediction]:
    """Ordinary-kriging predictions of a zero-trend field at ``targets``.

    Raises
    ------
    CovarianceError
        If the kriging matrix stays singular after one diagonal jitter.
    """
    t = _as_coords(targets)
    pred, var, lam = krige_arrays(train_coords, train_values, model, t)
    return [KrigingPrediction(Location(float(x), float(y)), float(p), float(v),
                              float(Z975 * np.sqrt(v)), float(w.sum()))
            for (x, y), p, v, w in zip(t, pred, var, lam)]


@dataclass(frozen=True)
class PipelineConfig:
    """Everything that defines the score, trend, smooth, fit sequence."""

    veracity: VeracityConfig = field(default_factory=VeracityConfig)
    q: float = 1.0
    family: str = "matern"
    smoothness: float | None = None
    estimator: str = "cressie_hawkins"
    bins: int = 15
    min_pairs: int = 30
    n_starts: int = 10
    seed: int = 0
    weighted: bool = True  # False gives the unweighted OLS + raw residual pipeline
    smooth: bool = True
    refit_trend: bool = True  # per-fold trend refit in cross-validation

    def __post_init__(self):
        if not self.q >= 0:
            raise ParameterError("q must be non-negative")


@dataclass(frozen=True, eq=False)
class PipelineResult:
    scores: VeracityScores | None
    fit: RegressionFit
    residuals: np.ndarray  # smoothed when smoothing is on
    variogram: EmpiricalVariogram
    model: VariogramModel


def run_pipeline(dataset: SpatialDataset, config: PipelineConfig | None = None,
                 fixed_beta=None) -> PipelineResult:
    """Score, fit the trend, smooth residuals and fit the variogram."""
    cfg = config or PipelineConfig()
    scores = score_all(dataset, cfg.veracity) if (cfg.weighted or cfg.smooth) else None
    if cfg.weighted:
        fit = fit_weighted(dataset, scores.scores)
    else:
        fit = fit_ols(dataset)
    if fixed_beta is not None:
        beta = np.array(fixed_beta, dtype=float)
        resid = dataset.values - dataset.covariates @ beta
        beta.setflags(write=False)
        resid.setflags(write=False)
        fit = RegressionFit(beta, fit.weights, resid, fit.method, fit.gram_condition)
    if cfg.smooth:
        eps = smooth_residuals(dataset, fit, scores, SmoothingConfig(cfg.q, scores.config))
    else:
        eps = np.array(fit.residuals)
    emp = empirical_variogram(dataset.coords, eps, cfg.bins, cfg.estimator)
    model = fit_variogram_wls(emp, cfg.family, smoothness=cfg.smoothness,
                              n_starts=cfg.n_starts, seed=cfg.seed, min_pairs=cfg.min_pairs)
    eps.setflags(write=False)
    return PipelineResult(scores, fit, eps, emp, model)


def predict(result: PipelineResult, train: SpatialDataset, targets, target_covariates):
    """Trend plus kriged residual at ``targets``; returns (prediction, variance)."""
    X0 = np.asarray(target_covariates, dtype=float).reshape(len(_as_coords(targets)), -1)
    res, var, _ = krige_arrays(train.coords, result.residuals, result.model, targets)
    return X0 @ result.fit.beta + res, var


@dataclass(frozen=True)
class FoldResult:
    index: int
    observed: float
    predicted: float | None
    error: float | None
    margin: float | None
    message: str | None = None


@dataclass(frozen=True)
class LoocvReport:
    per_point: tuple[FoldResult, ...]
    mspe: float
    coverage_95: float
    failures: int

    def as_dict(self) -> dict:
        return {"mspe": self.mspe, "coverage_95": self.coverage_95, "failures": self.failures,
                "per_point": [vars(f) for f in self.per_point]}


def loocv(dataset: SpatialDataset, config: PipelineConfig | None = None,
          test_indices=None) -> LoocvReport:
    """Leave-one-out cross-validation of the full prediction pipeline.

    Each fold removes one test observation, rescoring, refitting and
    smoothing on the rest (the neighborhood half-width is resolved once on
    the full data so folds share it), then predicts the held-out value.
    Training always keeps every non-held-out observation.  Failures are
    recorded per fold and excluded from the summaries.
    """
    cfg = config or PipelineConfig()
    if dataset.n < 3:
        raise DomainError("cross-validation needs at least three observations")
    cfg = replace(cfg, veracity=cfg.veracity.resolved(dataset.coords))
    idx = np.arange(dataset.n) if test_indices is None else np.unique(np.asarray(test_indices))
    if idx.size == 0 or idx.min() < 0 or idx.max() >= dataset.n:
        raise ParameterError("test indices must lie in [0, n)")
    fixed_beta = None
    if not cfg.refit_trend:
        fixed_beta = run_pipeline(dataset, cfg).fit.beta
    folds = []
    for i in idx.tolist():
        train = dataset.subset(np.delete(np.arange(dataset.n), i))
        obs = float(dataset.values[i])
        try:
            res = run_pipeline(train, cfg, fixed_beta)
            pred, var = predict(res, train, dataset.coords[i:i + 1], dataset.covariates[i:i + 1])
            p = float(pred[0])
            folds.append(FoldResult(i, obs, p, obs - p, float(Z975 * np.sqrt(var[0]))))
        except (NumericalError, InputError) as exc:
            folds.append(FoldResult(i, obs, None, None, None, f"{type(exc).__name__}: {exc}"))
    ok = [f for f in folds if f.error is not None]
    if ok:
        err = np.array([f.error for f in ok])
        mspe = float(np.mean(err ** 2))
        cover = float(np.mean(np.abs(err) <= np.array([f.margin for f in ok])))
    else:
        mspe, cover = float("nan"), float("nan")
    return LoocvReport(tuple(folds), mspe, cover, len(folds) - len(ok))


COAL_ASH_ENV = "VERIGEO_COALASH"
COAL_ASH_SCHEMA = CsvSchema("x", "y", "coalash")
COAL_ASH_DESIGN = DesignSpec(("intercept", "coord_x"))


def coal_ash_path() -> Path | None:
    """Location of the coal ash CSV: ``$VERIGEO_COALASH`` or the bundled data dir."""
    env = os.environ.get(COAL_ASH_ENV)
    candidates = [Path(env)] if env else []
    candidates.append(Path(__file__).parent / "data" / "coalash.csv")
    for p in candidates:
        if p.is_file():
            return p
    return None


def load_coal_ash(path=None) -> SpatialDataset:
    """Read the coal ash survey (columns x, y, coalash) with an x-trend design."""
    path = path or coal_ash_path()
    if path is None:
        raise InputError(f"coal ash CSV not found; set {COAL_ASH_ENV} to its path")
    return read_csv(path, COAL_ASH_SCHEMA, COAL_ASH_DESIGN)
