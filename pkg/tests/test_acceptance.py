"""Acceptance suite.

Each test checks one numbered criterion and prints a single
``PASS``/``FAIL`` line with the measured values and the pinned tolerance.
Run with ``pytest tests/test_acceptance.py -v -s`` to see the lines inline;
they are printed to the terminal even under output capture.
"""
import math
import time

import numpy as np
import pytest
from scipy.optimize import minimize

from verigeo.covariance import (SmoothingConfig, VariogramModel, semivariance, smooth_residuals)
from verigeo.dataset import SpatialDataset
from verigeo.errors import InputError
from verigeo.kriging import PipelineConfig, krige_arrays, load_coal_ash, loocv, run_pipeline
from verigeo.regression import fit_weighted
from verigeo.robust_stats import quantile
from verigeo.simulation import (Cell, ExperimentConfig, FieldSpec, NoiseModel, contaminate,
                                default_surface, noise_variance, preset, run_experiment,
                                simulate_field)
from verigeo.spatial_index import brute_force_square, build_index, query_square
from verigeo.theory import table31
from verigeo.veracity import score_all

TABLE_31 = {
    (100, 0.1): (0.016, 0.010, 1.585), (100, 0.5): (0.100, 0.010, 10.000),
    (100, 0.8): (0.398, 0.010, 39.811), (500, 0.1): (0.004, 0.002, 1.862),
    (500, 0.5): (0.045, 0.002, 22.361), (500, 0.8): (0.289, 0.002, 144.270),
    (1000, 0.1): (0.002, 0.001, 1.995), (1000, 0.5): (0.032, 0.001, 31.623),
    (1000, 0.8): (0.251, 0.001, 251.189),
}
REPS = 100
COAL_ASH_BETA = (11.071, -0.188)
N_FLAGGED = 11


@pytest.fixture
def report(pytestconfig):
    capman = pytestconfig.pluginmanager.getplugin("capturemanager")

    def emit(number, ok, detail):
        line = f"{'PASS' if ok else 'FAIL'} criterion {number}: {detail}"
        with capman.global_and_fixture_disabled():
            print("\n" + line, flush=True)
        assert ok, line

    return emit


@pytest.fixture(scope="module")
def desk_run():
    t0 = time.perf_counter()
    result = run_experiment(preset("desk", replications=REPS))
    return result, time.perf_counter() - t0


def _agg(cell, est):
    return cell.estimator_mses[est]["aggregate"]


def test_criterion_01_table31(report):
    t0 = time.perf_counter()
    bad = {k: (table31(*k), v) for k, v in TABLE_31.items() if table31(*k) != v}
    secs = time.perf_counter() - t0
    report(1, not bad and secs < 1.0,
           f"{len(TABLE_31) - len(bad)}/9 rows exact to 3 decimals in {secs:.3f}s (need 9/9, <1s)"
           + (f"; mismatches {bad}" if bad else ""))


def test_criterion_02_noise_variance(report):
    out = []
    for alpha, sig_a, expect in ((2.0, 5.0, (0.2, 26.2)), (0.05, 100.0, (0.909, 10005.45))):
        nm = NoiseModel(alpha_M=alpha, sigma_A=sig_a)
        const = noise_variance(0.0, 6.0, nm)
        coef = noise_variance(1.0, 6.0, nm) - const
        out.append((round(coef, 2), round(const, 2), round(expect[0], 2), round(expect[1], 2)))
    ok = all(a == c and b == d for a, b, c, d in out)
    report(2, ok, "; ".join(f"coef {a:.2f} vs {c:.2f}, const {b:.2f} vs {d:.2f}"
                            for a, b, c, d in out) + " (2 decimals)")


def test_criterion_03_sigma_m(report):
    got = [round(NoiseModel(alpha_M=a).sigma_M, 3) for a in (2.0, 0.5, 0.05)]
    report(3, got == [0.447, 0.707, 0.953], f"sigma_M = {got} (need [0.447, 0.707, 0.953])")


@pytest.mark.slow
def test_criterion_04_desk_pattern(report, desk_run):
    result, secs = desk_run
    c5, c50, c100 = (result.cell(sigma_A=s) for s in (5.0, 50.0, 100.0))
    re100 = c100.relative_efficiencies["ols/med_vs"]
    re5 = c5.relative_efficiencies["ols/med_vs"]
    m = {e: _agg(c50, e) for e in ("egls", "ols", "med_vs")}
    ok = re100 > 2 and re5 > 1.2 and m["egls"] > m["ols"] > m["med_vs"] and secs <= 600
    report(4, ok, f"RE(sigma_A=100) {re100:.3f} (>2), RE(sigma_A=5) {re5:.3f} (>1.2), "
                  f"sigma_A=50 MSE egls {m['egls']:.2f} > ols {m['ols']:.2f} > med_vs "
                  f"{m['med_vs']:.2f}, runtime {secs:.0f}s (<=600s)")


@pytest.mark.slow
def test_criterion_05_robustness_ratio(report, desk_run):
    result, _ = desk_run
    c5, c100 = result.cell(sigma_A=5.0), result.cell(sigma_A=100.0)
    vs_ratio = _agg(c100, "med_vs") / _agg(c5, "med_vs")
    ols_ratio = _agg(c100, "ols") / _agg(c5, "ols")
    report(5, vs_ratio <= 2 and ols_ratio >= 3,
           f"MSE ratio sigma_A 100/5: med_vs {vs_ratio:.3f} (<=2), ols {ols_ratio:.3f} (>=3)")


@pytest.mark.slow
def test_criterion_06_consistency(report):
    cells = [Cell(n, 50.0, 2.0, 0.95, "consistency") for n in (200, 500, 1000)]
    cfg = ExperimentConfig(cells=cells, replications=REPS, estimators=("med_vs",),
                           covariance_methods=())
    mses = [_agg(c, "med_vs") for c in run_experiment(cfg).cells]
    ok = all(a > b for a, b in zip(mses, mses[1:]))
    report(6, ok, "MSE(Med-VS) at n=200,500,1000: " + ", ".join(f"{m:.3f}" for m in mses)
           + " (strictly decreasing)")


@pytest.mark.slow
def test_criterion_07_covariance_fit(report):
    cfg = ExperimentConfig(cells=[Cell(1000, 50.0, 2.0, 0.95, "covariance")], replications=REPS,
                           estimators=("med_vs", "ols"), covariance_methods=("vs", "wls"))
    cov = run_experiment(cfg).cells[0].covariance_mses
    vs, wls = cov["vs"], cov["wls"]
    finite = all(math.isfinite(vs[k]) for k in ("psill", "range"))
    ok = finite and all(wls[k] >= 10 * vs[k] for k in ("psill", "range"))
    report(7, ok, f"psill MSE vs {vs['psill']:.4g} / wls {wls['psill']:.4g}, range MSE vs "
                  f"{vs['range']:.4g} / wls {wls['range']:.4g} (vs finite, wls >= 10x vs)")


def _coal_ash_or_fail(report, number):
    try:
        return load_coal_ash()
    except InputError as exc:
        report(number, False, f"coal ash data unavailable ({exc})")


def test_criterion_08_coal_ash_regression(report):
    data = _coal_ash_or_fail(report, 8)
    beta = run_pipeline(data, PipelineConfig()).fit.beta
    ok = abs(beta[0] - COAL_ASH_BETA[0]) <= 0.25 and abs(beta[1] - COAL_ASH_BETA[1]) <= 0.02
    report(8, ok, f"beta_vs = ({beta[0]:.3f}, {beta[1]:.3f}) vs (11.071, -0.188) "
                  "within (0.25, 0.02)")


@pytest.mark.slow
def test_criterion_09_coal_ash_loocv(report):
    data = _coal_ash_or_fail(report, 9)
    # the previously flagged outliers are the lowest-scoring observations
    flagged = np.argsort(score_all(data).scores, kind="stable")[:N_FLAGGED]
    test_idx = np.setdiff1d(np.arange(data.n), flagged)
    t0 = time.perf_counter()
    rep = loocv(data, PipelineConfig(), test_idx)
    secs = time.perf_counter() - t0
    ok = 0.6 <= rep.mspe <= 0.85 and rep.coverage_95 >= 0.95 and secs <= 300
    report(9, ok, f"MSPE {rep.mspe:.3f} (in [0.6, 0.85]), coverage {rep.coverage_95:.3f} "
                  f"(>=0.95) over {test_idx.size} points in {secs:.0f}s (<=300s)")


def _oracle_quantile(rng):
    for _ in range(10_000):
        x = rng.normal(size=int(rng.integers(1, 30)))
        p = float(rng.random())
        s = np.sort(x)
        k = next(i for i in range(s.size) if (i + 1) / s.size >= p) if p > 0 else 0
        if quantile(x, p) != s[k]:
            return False
    return True


def _oracle_square(rng):
    for _ in range(1000):
        pts = rng.uniform(0, 10, (int(rng.integers(1, 200)), 2))
        idx = build_index(pts, float(rng.uniform(0.2, 3)))
        c, d = rng.uniform(0, 10, 2), float(rng.uniform(0.1, 2))
        if list(query_square(idx, c, d).member_indices) != brute_force_square(pts, c, d):
            return False
    return True


def _oracle_weighted(rng):
    for _ in range(100):
        n, p = int(rng.integers(8, 30)), int(rng.integers(1, 4))
        X, z, w = rng.normal(size=(n, p)), rng.normal(size=n), rng.uniform(0.01, 1, n)
        ds = SpatialDataset(np.zeros((n, 2)), z, X, tuple(f"c{j}" for j in range(p)))
        res = minimize(lambda b: float(np.sum(w * (z - X @ b) ** 2)), np.zeros(p),
                       method="BFGS", options={"gtol": 1e-12})
        if not np.allclose(fit_weighted(ds, w).beta, res.x, rtol=0, atol=1e-6):
            return False
    return True


def _oracle_kriging(rng):
    xs, z = rng.uniform(0, 5, (50, 2)), rng.normal(size=50)
    model = VariogramModel("exponential", 0.0, 2.0, 1.0)
    pred, var, _ = krige_arrays(xs, z, model, xs)
    _, _, lam = krige_arrays(xs, z, model, rng.uniform(0, 5, (30, 2)))
    return (np.allclose(pred, z, rtol=0, atol=1e-10) and np.allclose(var, 0, atol=1e-10)
            and np.allclose(lam.sum(axis=1), 1, rtol=0, atol=1e-10))


def _oracle_matern():
    h = np.linspace(1e-4, 10, 5000)
    m = semivariance(VariogramModel("matern", 0.3, 2.0, 1.3, 0.5), h)
    e = semivariance(VariogramModel("exponential", 0.3, 2.0, 1.3), h)
    return bool(np.max(np.abs(m - e)) <= 1e-10)


def _oracle_smoothing(rng):
    coords = rng.uniform(0, 6, (150, 2))
    ds = SpatialDataset.from_arrays(coords, np.sin(coords[:, 0]) + 0.1 * rng.normal(size=150))
    scores = score_all(ds)
    fit = fit_weighted(ds, scores.scores)
    q0 = smooth_residuals(ds, fit, scores, SmoothingConfig(0.0, scores.config))
    q2 = smooth_residuals(ds, fit, scores, SmoothingConfig(2.0, scores.config))
    one = scores.scores == 1.0
    return (np.array_equal(q0, fit.residuals) and one.any()
            and np.array_equal(q2[one], fit.residuals[one]))


def _reproducible():
    side = 8.0
    surf = default_surface(side, 11)
    a = simulate_field(FieldSpec(150, side, surface=surf, seed=5))
    b = simulate_field(FieldSpec(150, side, surface=surf, seed=5))
    noise = NoiseModel(0.9, 0.5, 50.0, 7)
    za, zb = contaminate(a, noise, 6)[0], contaminate(b, noise, 6)[0]
    cfg = ExperimentConfig(cells=[Cell(100, 50.0, 2.0, 0.9)], replications=2, n_starts=2,
                           egls_max_iter=2)
    ea, eb = run_experiment(cfg).as_dict(), run_experiment(cfg).as_dict()
    for d in (ea, eb):
        for c in d["cells"]:
            c.pop("seconds")
    return za.values.tobytes() == zb.values.tobytes() and ea == eb


def test_criterion_10_oracle_suites(report):
    rng = np.random.default_rng(2024)
    checks = {"quantile 1e4": _oracle_quantile(rng), "query_square 1e3": _oracle_square(rng),
              "weighted argmin 1e2": _oracle_weighted(rng), "kriging 1e-10": _oracle_kriging(rng),
              "matern 0.5 1e-10": _oracle_matern(), "smoothing endpoints": _oracle_smoothing(rng),
              "bitwise reproducibility": _reproducible()}
    failed = [k for k, v in checks.items() if not v]
    report(10, not failed, f"{len(checks) - len(failed)}/{len(checks)} suites pass"
           + (f"; failing {failed}" if failed else ""))
