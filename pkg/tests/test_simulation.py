import math

import numpy as np
import pytest

from verigeo.covariance import VariogramModel
from verigeo.errors import ParameterError
from verigeo.simulation import (TRUE_BETA, Cell, ExperimentConfig, FieldSpec, NoiseModel, SurfaceSpec,
                                beta_symmetric, contaminate, default_surface, derive_seed,
                                generator, mixture_surface, noise_variance, preset,
                                run_experiment, simulate_field, write_tables)

SURF = default_surface(10.0, 11)


def test_empty_surface_is_constant():
    s = SurfaceSpec(5.0, 0, 2.5)
    np.testing.assert_array_equal(s(np.random.default_rng(0).uniform(0, 9, (20, 2))), 2.5)


def test_density_at_mode():
    s = SurfaceSpec(1.0, 1, 0.0, ((1.0, (2.0, 3.0), np.eye(2)),))
    assert mixture_surface(s, (2.0, 3.0)) == pytest.approx(0.15915494309189535, abs=1e-16)


def test_gradient_zero_at_means():
    h = 1e-6
    for _, mu, _ in SurfaceSpec(1.0, 1, 0.0, ((1.0, (4.0, 4.0), 2 * np.eye(2)),)).components:
        s = SurfaceSpec(1.0, 1, 0.0, ((1.0, mu, 2 * np.eye(2)),))
        gx = (mixture_surface(s, (mu[0] + h, mu[1])) - mixture_surface(s, (mu[0] - h, mu[1]))) / (2 * h)
        gy = (mixture_surface(s, (mu[0], mu[1] + h)) - mixture_surface(s, (mu[0], mu[1] - h))) / (2 * h)
        assert abs(gx) < 1e-8 and abs(gy) < 1e-8


def test_surface_validation():
    with pytest.raises(ParameterError):
        SurfaceSpec(1.0, 2, 0.0, ((1.0, (0, 0), np.eye(2)),))
    with pytest.raises(ParameterError):
        SurfaceSpec(1.0, 1, 0.0, ((1.0, (0, 0), -np.eye(2)),))


def test_scale_free_bump_height():
    for side in (5.0, 50.0):
        s = default_surface(side, 3, H1=50.0, H2=1)
        w, mu, _ = s.components[0]
        u = w / (2 * math.pi * (side / 4) ** 2)
        assert mixture_surface(s, mu) == pytest.approx(50.0 * u, rel=1e-12)


def test_zero_variance_field_is_trend():
    spec = FieldSpec(50, 10.0, covariance=VariogramModel("exponential", 0.0, 0.0, 1.0),
                     surface=SURF, seed=1)
    ds = simulate_field(spec)
    np.testing.assert_allclose(ds.values, ds.covariates @ np.array(spec.beta), rtol=1e-14)


def test_same_seed_is_bitwise_identical():
    a = simulate_field(FieldSpec(200, 6.0, surface=SURF, seed=9))
    b = simulate_field(FieldSpec(200, 6.0, surface=SURF, seed=9))
    assert a.values.tobytes() == b.values.tobytes()
    noise = NoiseModel(0.8, 0.5, 50.0, 3)
    (za, ga), (zb, gb) = contaminate(a, noise, 4), contaminate(b, noise, 4)
    assert za.values.tobytes() == zb.values.tobytes() and np.array_equal(ga, gb)


def test_field_variance_moment():
    side = math.sqrt(100)
    eps = []
    for rep in range(200):
        ds = simulate_field(FieldSpec(500, side, surface=SURF, seed=derive_seed(1, rep)))
        eps.append(ds.values - ds.covariates @ np.array(TRUE_BETA))
    per_index = np.var(np.array(eps), axis=0, ddof=1)
    # one index alone has sampling sd ~0.6, so average the per-index variances
    assert 5.4 <= per_index.mean() <= 6.6
    assert 4.0 <= per_index[17] <= 8.0


def test_no_contamination_when_qe_one():
    clean = simulate_field(FieldSpec(100, 5.0, surface=SURF, seed=2))
    z, good = contaminate(clean, NoiseModel(1.0, 2.0, 100.0), 5)
    assert good.all()
    np.testing.assert_array_equal(z.values, clean.values)


def test_good_set_size_and_fixed_across_cells():
    a = NoiseModel(0.29, 2.0, 5.0, 7).good_mask(100)
    assert a.sum() == 29
    b = NoiseModel(0.29, 0.05, 100.0, 7).good_mask(100)
    np.testing.assert_array_equal(a, b)


@pytest.mark.parametrize("alpha, sigma", [(2.0, 0.447), (0.5, 0.707), (0.05, 0.953)])
def test_sigma_m(alpha, sigma):
    assert round(NoiseModel(alpha_M=alpha).sigma_M, 3) == sigma
    if alpha == 2.0:
        assert NoiseModel(alpha_M=2.0).sigma_M == pytest.approx(0.4472135954999579, abs=1e-16)


def test_multiplicative_noise_mean_and_support():
    for a in (2.0, 0.05):
        e = 2.0 * beta_symmetric(generator(0), a, 10**6)
        assert abs(e.mean() - 1.0) < 0.002
        assert e.min() >= 0.0 and e.max() <= 2.0
        assert np.var(e) == pytest.approx(1 / (2 * a + 1), rel=0.01)


def test_noise_variance_examples():
    n1 = NoiseModel(alpha_M=2.0, sigma_A=5.0)
    assert noise_variance(0.0, 6.0, n1) == pytest.approx(26.2, abs=1e-12)
    assert noise_variance(1.0, 6.0, n1) - noise_variance(0.0, 6.0, n1) == pytest.approx(0.2)
    n2 = NoiseModel(alpha_M=0.05, sigma_A=100.0)
    assert noise_variance(0.0, 6.0, n2) == pytest.approx(10005.454545454545, abs=1e-9)
    assert n2.sigma_M2 == pytest.approx(1 / 1.1)
    assert noise_variance(0.0, 0.0, NoiseModel(alpha_M=math.inf, sigma_A=0.0)) == 0.0


def _tiny_config(**kw):
    return ExperimentConfig(cells=[Cell(120, 50.0, 2.0, 0.9)], replications=3,
                            n_starts=2, egls_max_iter=3, **kw)


def _strip(d):
    for c in d["cells"]:
        c.pop("seconds")
    return d


def test_experiment_bitwise_reproducible(tmp_path):
    a = run_experiment(_tiny_config())
    b = run_experiment(_tiny_config())
    assert _strip(a.as_dict()) == _strip(b.as_dict())
    pa = write_tables(a, tmp_path / "a")
    pb = write_tables(b, tmp_path / "b")
    for x, y in zip(pa, pb):
        assert x.read_bytes() == y.read_bytes()


def test_experiment_independent_of_worker_count():
    a = run_experiment(_tiny_config())
    b = run_experiment(_tiny_config(workers=2))
    assert _strip(a.as_dict()) == _strip(b.as_dict())


def test_preset_and_validation():
    cfg = preset("desk", replications=5)
    assert [c.sigma_A for c in cfg.cells] == [5.0, 50.0, 100.0]
    with pytest.raises(ParameterError):
        preset("nope")
    with pytest.raises(ParameterError):
        ExperimentConfig(cells=[Cell(100, 5, 2, 0.9)], estimators=("lasso",))


@pytest.mark.slow
def test_zero_noise_cell_estimators_agree():
    cfg = ExperimentConfig(cells=[Cell(500, 0.0, 2.0, 1.0)], replications=100,
                           covariance_methods=(), n_starts=4)
    mses = [v["aggregate"] for v in run_experiment(cfg).cells[0].estimator_mses.values()]
    assert max(mses) <= 2 * min(mses)
