"""Gaussian random fields, contamination and the Monte Carlo estimator comparison.

Random streams are numpy Philox generators keyed by ``SeedSequence``
spawn keys, so every replication draws from its own substream no matter
how replications are scheduled.  The same replication index reuses the
same locations, field and standardized noise draws in every cell of an
experiment (common random numbers), which sharpens cross-cell contrasts.
"""
from __future__ import annotations

import csv
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .covariance import (SmoothingConfig, VariogramModel, covariance_matrix, empirical_variogram,
                         fit_variogram_wls, smooth_residuals)
from .dataset import DesignSpec, SpatialDataset
from .errors import CovarianceError, NumericalError, ParameterError
from .regression import fit_egls, fit_ols, fit_weighted
from .theory import psi_epsilon, table31, theory_bounds
from .veracity import VeracityConfig, score_all

TRUE_BETA = (70.0, 5.0, -2.0, -0.05)
TRUE_THETA = VariogramModel("exponential", nugget=0.0, psill=6.0, range=1.0)
DENSITY = 5.0  # points per unit area of the default design
ESTIMATORS = ("med_vs", "mean_vs", "ols", "egls")

__all__ = ["Cell", "ExperimentConfig", "ExperimentResult", "FieldSpec", "NoiseModel",
           "SurfaceSpec", "contaminate", "default_surface", "mixture_surface", "noise_variance",
           "preset", "psi_epsilon", "run_experiment", "simulate_field", "table31",
           "theory_bounds", "write_tables"]
COVARIANCE_METHODS = ("vs", "wls")


def domain_side(n: int, density: float = DENSITY) -> float:
    """Side of the square domain holding ``n`` points at ``density``."""
    return math.sqrt(n / density)


def generator(seed) -> np.random.Generator:
    """Philox generator from an int or a ``SeedSequence``."""
    ss = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(int(seed))
    return np.random.Generator(np.random.Philox(ss))


def derive_seed(master: int, *key: int) -> int:
    """A 64-bit seed for substream ``key`` of ``master``."""
    ss = np.random.SeedSequence(int(master), spawn_key=tuple(int(k) for k in key))
    lo, hi = ss.generate_state(2, np.uint32)
    return int(hi) << 32 | int(lo)


@dataclass(frozen=True)
class SurfaceSpec:
    """``h(s) = H1 * sum_j w_j phi(s; mu_j, Sigma_j) + H3`` with bivariate normal densities."""

    H1: float = 50.0
    H2: int = 0
    H3: float = 0.0
    components: tuple = ()  # (weight, mean (2,), covariance (2, 2)) triples

    def __post_init__(self):
        comps = tuple((float(w), tuple(map(float, mu)), tuple(map(tuple, np.asarray(S, float))))
                      for w, mu, S in self.components)
        object.__setattr__(self, "components", comps)
        if self.H2 != len(comps):
            raise ParameterError(f"H2 = {self.H2} but {len(comps)} components given")
        for _, _, S in comps:
            S = np.asarray(S)
            if S.shape != (2, 2) or not np.allclose(S, S.T):
                raise ParameterError("component covariances must be symmetric 2x2")
            if np.any(np.linalg.eigvalsh(S) <= 0):
                raise ParameterError("component covariances must be positive definite")

    def __call__(self, coords) -> np.ndarray:
        coords = np.atleast_2d(np.asarray(coords, dtype=float))
        total = np.zeros(coords.shape[0])
        for w, mu, S in self.components:
            S = np.asarray(S)
            d = coords - np.asarray(mu)
            Sinv = np.linalg.inv(S)
            quad_form = np.einsum("ij,jk,ik->i", d, Sinv, d)
            total += w * np.exp(-0.5 * quad_form) / (2.0 * math.pi * math.sqrt(np.linalg.det(S)))
        return self.H1 * total + self.H3


def mixture_surface(spec: SurfaceSpec, s) -> float:
    """Surface value at one location."""
    xy = (s.x, s.y) if hasattr(s, "x") else s
    return float(spec(np.asarray(xy, dtype=float).reshape(1, 2))[0])


def default_surface(side: float, seed: int = 0, H1: float = 50.0, H2: int = 3,
                    H3: float = 0.0, scale_free: bool = True) -> SurfaceSpec:
    """Seeded surface with ``H2`` bumps of covariance ``(side/4)^2 I``.

    Means are uniform on the middle 80% of ``[0, side]^2`` and raw weights
    ``u_j`` uniform on [0.5, 1.5].  With ``scale_free`` the weights are
    ``u_j 2 pi (side/4)^2``, which cancels the density normalization so the
    bump heights are ``H1 u_j`` whatever the domain size; otherwise the
    surface flattens like ``1 / side^2``.
    """
    rng = generator(seed)
    means = rng.uniform(0.1 * side, 0.9 * side, size=(H2, 2))
    weights = rng.uniform(0.5, 1.5, size=H2)
    S = (side / 4.0) ** 2 * np.eye(2)
    if scale_free:
        weights = weights * 2.0 * math.pi * (side / 4.0) ** 2
    return SurfaceSpec(H1, H2, H3, tuple((w, m, S) for w, m in zip(weights, means)))


@dataclass(frozen=True)
class FieldSpec:
    n: int
    domain_side: float
    beta: tuple = TRUE_BETA
    covariance: VariogramModel = TRUE_THETA
    surface: SurfaceSpec = field(default_factory=SurfaceSpec)
    seed: int = 0

    def __post_init__(self):
        if self.n < 2:
            raise ParameterError("a field needs n >= 2")
        if not self.domain_side > 0:
            raise ParameterError("domain_side must be positive")
        if len(self.beta) != 4:
            raise ParameterError("beta is (intercept, x, y, surface)")

    @property
    def design(self) -> DesignSpec:
        return DesignSpec(("intercept", "coord_x", "coord_y", "surface"), surface=self.surface)


def simulate_field(spec: FieldSpec) -> SpatialDataset:
    """Uniform locations on ``[0, side]^2`` and clean responses ``X beta + eps``.

    ``eps`` is drawn as ``L u`` with ``L`` the Cholesky factor of the
    covariance of the sampled locations.
    """
    rng = generator(spec.seed)
    coords = rng.uniform(0.0, spec.domain_side, size=(spec.n, 2))
    u = rng.standard_normal(spec.n)
    design = spec.design
    X = design.build(coords)
    mean = X @ np.asarray(spec.beta, dtype=float)
    if spec.covariance.sill > 0:
        C = covariance_matrix(spec.covariance, coords)
        try:
            L = np.linalg.cholesky(C)
        except np.linalg.LinAlgError:
            raise CovarianceError("field covariance is not positive definite on the sample") from None
        values = mean + L @ u
    else:
        values = mean
    return SpatialDataset(coords, values, X, design.terms, design)


@dataclass(frozen=True)
class NoiseModel:
    """Additive-multiplicative contamination outside a good set of size ``floor(q_e n)``."""

    q_e: float = 0.95
    alpha_M: float = 2.0
    sigma_A: float = 5.0
    good_set_seed: int = 0

    def __post_init__(self):
        if not 0 < self.q_e <= 1:
            raise ParameterError(f"q_e must lie in (0, 1], got {self.q_e}")
        if not self.alpha_M > 0:
            raise ParameterError(f"alpha_M must be positive, got {self.alpha_M}")
        if not self.sigma_A >= 0:
            raise ParameterError(f"sigma_A must be non-negative, got {self.sigma_A}")

    @property
    def sigma_M2(self) -> float:
        """Variance of ``2 Beta(a, a)``, i.e. ``1 / (2a + 1)``."""
        return 1.0 / (2.0 * self.alpha_M + 1.0)

    @property
    def sigma_M(self) -> float:
        return math.sqrt(self.sigma_M2)

    def good_mask(self, n: int) -> np.ndarray:
        k = math.floor(self.q_e * n + 1e-9)  # guard 0.29 * 100 = 28.999...96
        mask = np.zeros(n, dtype=bool)
        mask[generator(self.good_set_seed).permutation(n)[:k]] = True
        return mask


def beta_symmetric(rng: np.random.Generator, a: float, size: int) -> np.ndarray:
    """``Beta(a, a)`` draws as ``G1 / (G1 + G2)`` from two gamma variates.

    Each ``Gamma(a)`` is generated as ``Gamma(a + 1) U^(1/a)`` in log form,
    which stays finite for the small shapes where plain gamma draws
    underflow to zero.
    """
    if math.isinf(a):
        return np.full(size, 0.5)
    lg = []
    for _ in range(2):
        g = rng.standard_gamma(a + 1.0, size)
        u = rng.random(size)
        lg.append(np.log(g) + np.log1p(-u) / a)  # 1 - U is uniform on (0, 1]
    return 1.0 / (1.0 + np.exp(lg[1] - lg[0]))


def contaminate(clean: SpatialDataset, noise: NoiseModel, seed: int = 0,
                ) -> tuple[SpatialDataset, np.ndarray]:
    """Observed ``Z = eps_M Y + eps_A`` off the good set, ``Z = Y`` on it.

    ``eps_M = 2 Beta(alpha_M, alpha_M)`` and ``eps_A ~ N(0, sigma_A^2)``.
    Standardized draws are taken for every index, so changing ``sigma_A``
    or the good set leaves the other draws unchanged.
    """
    n = clean.n
    good = noise.good_mask(n)
    rng = generator(seed)
    eps_m = 2.0 * beta_symmetric(rng, noise.alpha_M, n)
    eps_a = noise.sigma_A * rng.standard_normal(n)
    z = np.array(clean.values)
    bad = ~good
    z[bad] = eps_m[bad] * z[bad] + eps_a[bad]
    good.setflags(write=False)
    return clean.with_values(z), good


def noise_variance(x_beta: float, sigma_eps2: float, noise: NoiseModel) -> float:
    """Extra variance of a contaminated observation:
    ``(x'beta)^2 sigma_M^2 + sigma_eps^2 sigma_M^2 + sigma_A^2``."""
    s2 = noise.sigma_M2
    return x_beta * x_beta * s2 + sigma_eps2 * s2 + noise.sigma_A ** 2


# ---------------------------------------------------------------------------
# Monte Carlo harness


@dataclass(frozen=True)
class Cell:
    n: int
    sigma_A: float
    alpha_M: float
    q_e: float
    label: str = ""


@dataclass(frozen=True)
class ExperimentConfig:
    """Grid of cells plus everything needed to reproduce them."""

    cells: tuple = ()
    replications: int = 100
    master_seed: int = 20240101
    good_set_seed: int = 7
    surface_seed: int = 11
    density: float = DENSITY
    H1: float = 50.0
    H2: int = 3
    H3: float = 0.0
    beta: tuple = TRUE_BETA
    theta: VariogramModel = TRUE_THETA
    estimators: tuple = ESTIMATORS
    covariance_methods: tuple = COVARIANCE_METHODS
    veracity: VeracityConfig = field(default_factory=VeracityConfig)
    q: float = 1.0
    n_starts: int = 10
    egls_starts: int = 2
    egls_max_iter: int = 20
    egls_tol: float = 1e-6
    workers: int = 1

    def __post_init__(self):
        object.__setattr__(self, "cells", tuple(c if isinstance(c, Cell) else Cell(**c)
                                                for c in self.cells))
        if self.replications < 2:
            raise ParameterError("need at least two replications")
        bad = set(self.estimators) - set(ESTIMATORS)
        if bad:
            raise ParameterError(f"unknown estimators {sorted(bad)}")
        bad = set(self.covariance_methods) - set(COVARIANCE_METHODS)
        if bad:
            raise ParameterError(f"unknown covariance methods {sorted(bad)}")


def _one_replication(cfg: ExperimentConfig, cell: Cell, rep: int) -> dict:
    """Estimates from one replication of one cell; raises NumericalError on failure."""
    side = domain_side(cell.n, cfg.density)
    surface = default_surface(side, cfg.surface_seed, cfg.H1, cfg.H2, cfg.H3)
    spec = FieldSpec(cell.n, side, cfg.beta, cfg.theta, surface,
                     derive_seed(cfg.master_seed, cell.n, rep, 0))
    clean = simulate_field(spec)
    noise = NoiseModel(cell.q_e, cell.alpha_M, cell.sigma_A, cfg.good_set_seed)
    data, _ = contaminate(clean, noise, derive_seed(cfg.master_seed, cell.n, rep, 1))

    out: dict = {"beta": {}, "theta": {}}
    need_med = "med_vs" in cfg.estimators or "vs" in cfg.covariance_methods
    if need_med:
        med_scores = score_all(data, cfg.veracity)
        med_fit = fit_weighted(data, med_scores.scores)
        out["beta"]["med_vs"] = med_fit.beta
    if "mean_vs" in cfg.estimators:
        mean_scores = score_all(data, VeracityConfig(cfg.veracity.delta, cfg.veracity.alpha,
                                                     "mean_sd", cfg.veracity.include_self,
                                                     cfg.veracity.min_neighbors))
        out["beta"]["mean_vs"] = fit_weighted(data, mean_scores.scores).beta
    ols = fit_ols(data)
    out["beta"]["ols"] = ols.beta
    wls_model = None
    if "wls" in cfg.covariance_methods or "egls" in cfg.estimators:
        emp = empirical_variogram(data.coords, ols.residuals)
        wls_model = fit_variogram_wls(emp, "exponential", n_starts=cfg.n_starts, seed=rep)
        out["theta"]["wls"] = wls_model
    if "egls" in cfg.estimators:
        fit, report = fit_egls(data, wls_model, cfg.egls_max_iter, cfg.egls_tol,
                               variogram_options={"fit": {"n_starts": cfg.egls_starts,
                                                          "seed": rep}},
                               initial_model_fitted=True)
        out["beta"]["egls"] = fit.beta
        out["egls_iterations"] = report.iterations
    if "vs" in cfg.covariance_methods:
        eps = smooth_residuals(data, med_fit, med_scores, SmoothingConfig(cfg.q, med_scores.config))
        emp = empirical_variogram(data.coords, eps)
        out["theta"]["vs"] = fit_variogram_wls(emp, "exponential", n_starts=cfg.n_starts, seed=rep)
    out["beta"] = {k: v for k, v in out["beta"].items() if k in cfg.estimators}
    return out


def _run_cell_chunk(args):
    cfg, cell, reps = args
    results = []
    for rep in reps:
        try:
            results.append((rep, _one_replication(cfg, cell, rep), None))
        except NumericalError as exc:
            results.append((rep, None, f"{type(exc).__name__}: {exc}"))
    return results


@dataclass
class CellResult:
    cell: Cell
    estimator_mses: dict
    relative_efficiencies: dict
    covariance_mses: dict
    replications: int
    failures: list
    seconds: float


@dataclass
class ExperimentResult:
    cells: list
    config: ExperimentConfig
    replications: int
    seeds: list

    def cell(self, **match) -> CellResult:
        for c in self.cells:
            if all(getattr(c.cell, k) == v for k, v in match.items()):
                return c
        raise KeyError(match)

    def as_dict(self) -> dict:
        return {"replications": self.replications, "seeds": self.seeds,
                "cells": [{"cell": asdict(c.cell), "estimator_mses": c.estimator_mses,
                           "relative_efficiencies": c.relative_efficiencies,
                           "covariance_mses": c.covariance_mses, "replications": c.replications,
                           "failures": c.failures, "seconds": c.seconds} for c in self.cells]}


def _summarize(cfg: ExperimentConfig, cell: Cell, results, seconds: float) -> CellResult:
    beta = np.asarray(cfg.beta, dtype=float)
    ok = [r for _, r, err in results if err is None]
    failures = [{"replication": rep, "error": err} for rep, _, err in results if err is not None]
    mses = {}
    for est in cfg.estimators:
        sq = np.array([(r["beta"][est] - beta) ** 2 for r in ok]) if ok else np.empty((0, beta.size))
        mses[est] = {"aggregate": float(sq.sum(axis=1).mean()) if ok else math.nan,
                     "per_parameter": sq.mean(axis=0).tolist() if ok else []}
    re = {}
    if "med_vs" in mses:
        for ref in ("ols", "egls", "mean_vs"):
            if ref in mses:
                re[f"{ref}/med_vs"] = mses[ref]["aggregate"] / mses["med_vs"]["aggregate"]
    cov = {}
    th = cfg.theta
    for m in cfg.covariance_methods:
        fits = [r["theta"][m] for r in ok]
        cov[m] = {k: float(np.mean([(getattr(f, k) - getattr(th, k)) ** 2 for f in fits]))
                  for k in ("nugget", "psill", "range")} if fits else {}
    return CellResult(cell, mses, re, cov, len(ok), failures, seconds)


def run_experiment(config: ExperimentConfig, progress=None) -> ExperimentResult:
    """Run every cell of ``config``; deterministic given ``master_seed``.

    Replications may be spread over ``config.workers`` processes; results
    are gathered in replication order, so the output does not depend on
    the worker count.  Failed replications are excluded and listed.
    """
    if not config.cells:
        raise ParameterError("experiment has no cells")
    workers = max(1, int(config.workers))
    cells = []
    for cell in config.cells:
        t0 = time.perf_counter()
        reps = list(range(config.replications))
        if workers == 1:
            results = _run_cell_chunk((config, cell, reps))
        else:
            chunks = [reps[i::workers] for i in range(workers)]
            with ProcessPoolExecutor(workers) as pool:
                parts = pool.map(_run_cell_chunk, [(config, cell, c) for c in chunks])
            results = sorted((r for part in parts for r in part), key=lambda r: r[0])
        cells.append(_summarize(config, cell, results, time.perf_counter() - t0))
        if progress:
            progress(cells[-1])
    seeds = [derive_seed(config.master_seed, c.n, r, k) for c in config.cells[:1]
             for r in range(min(config.replications, 3)) for k in (0, 1)]
    return ExperimentResult(cells, config, config.replications, seeds)


def write_tables(result: ExperimentResult, out_dir) -> list[Path]:
    """Per-cell CSV tables of regression and covariance MSEs."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    cfg = result.config
    reg_path = out / "regression_mse.csv"
    cov_path = out / "covariance_mse.csv"
    with open(reg_path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["label", "n", "sigma_A", "sigma_M", "q_e", *cfg.estimators,
                    "re_med_vs_ols", "replications", "failures"])
        for c in result.cells:
            sm = NoiseModel(c.cell.q_e, c.cell.alpha_M, c.cell.sigma_A).sigma_M
            w.writerow([c.cell.label, c.cell.n, _fmt(c.cell.sigma_A), _fmt(sm), _fmt(c.cell.q_e),
                        *[_fmt(c.estimator_mses[e]["aggregate"]) for e in cfg.estimators],
                        _fmt(c.relative_efficiencies.get("ols/med_vs", math.nan)),
                        c.replications, len(c.failures)])
    paths = [reg_path]
    if cfg.covariance_methods:
        with open(cov_path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["label", "n", "sigma_A", "sigma_M", "q_e",
                        *[f"{p}_{m}" for p in ("psill", "range", "nugget")
                          for m in cfg.covariance_methods]])
            for c in result.cells:
                sm = NoiseModel(c.cell.q_e, c.cell.alpha_M, c.cell.sigma_A).sigma_M
                w.writerow([c.cell.label, c.cell.n, _fmt(c.cell.sigma_A), _fmt(sm),
                            _fmt(c.cell.q_e),
                            *[_fmt(c.covariance_mses[m].get(p, math.nan))
                              for p in ("psill", "range", "nugget")
                              for m in cfg.covariance_methods]])
        paths.append(cov_path)
    return paths


def _fmt(v: float) -> str:
    return format(float(v), ".6g")


def default_workers() -> int:
    """Worker count from ``VERIGEO_THREADS`` (default 1)."""
    try:
        return max(1, int(os.environ.get("VERIGEO_THREADS", "1")))
    except ValueError:
        return 1


SIGMA_A_GRID = (5.0, 50.0, 100.0)
ALPHA_M_GRID = (2.0, 0.5, 0.05)
QE_GRIDS = {"table": (0.95, 0.9, 0.8), "text": (0.95, 0.85, 0.75)}


def table_cells(n_values=(500, 1000, 5000), qe_grid: str = "table") -> tuple[Cell, ...]:
    """One-factor-at-a-time grid: each noise parameter varies while the
    other two sit at their lowest-noise values (alpha_M = 2, q_e = 0.95,
    sigma_A = 5)."""
    if qe_grid not in QE_GRIDS:
        raise ParameterError(f"unknown q_e grid {qe_grid!r}; expected one of {sorted(QE_GRIDS)}")
    cells = []
    for s in SIGMA_A_GRID:
        cells += [Cell(n, s, 2.0, 0.95, "sigma_A") for n in n_values]
    for a in ALPHA_M_GRID:
        cells += [Cell(n, 5.0, a, 0.95, "sigma_M") for n in n_values]
    for q in QE_GRIDS[qe_grid]:
        cells += [Cell(n, 5.0, 2.0, q, "q_e") for n in n_values]
    return tuple(cells)


PRESETS = {
    # the sigma_A block at n = 500, the cheapest cut that shows the main contrast
    "desk": {"cells": [Cell(500, s, 2.0, 0.95, "sigma_A") for s in SIGMA_A_GRID]},
    "table": {"cells": list(table_cells((500, 1000), "table"))},
    "table_text_qe": {"cells": list(table_cells((500, 1000), "text"))},
    "full": {"cells": list(table_cells((500, 1000, 5000), "table"))},
}


def preset(name: str, **overrides) -> ExperimentConfig:
    """A named experiment configuration with optional field overrides."""
    if name not in PRESETS:
        raise ParameterError(f"unknown preset {name!r}; expected one of {sorted(PRESETS)}")
    return ExperimentConfig(**{**PRESETS[name], **overrides})
