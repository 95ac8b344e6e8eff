import math

import numpy as np
import pytest
from scipy import integrate, stats

from gppp.bayes_core import (
    DualAveraging,
    HmcConfig,
    PriorSpec,
    adaptation_windows,
    gig_logpdf,
    half_cauchy_logpdf,
    leapfrog,
    run_hmc,
    sample_dirichlet_posterior,
    split_rhat,
    student_t_logpdf,
)
from gppp.errors import ConfigError, SamplerError


class GaussianTarget:
    """Independent normals with the given means and scales"""

    def __init__(self, mean, scale):
        self.mean = np.asarray(mean, dtype=float)
        self.scale = np.asarray(scale, dtype=float)
        self.dim = self.mean.shape[0]
        self.parameter_names = tuple(f"x{i}" for i in range(self.dim))

    def log_density_and_grad(self, q):
        z = (q - self.mean) / self.scale
        return -0.5 * np.sum(z ** 2), -z / self.scale


class BrokenTarget:
    dim = 1

    def log_density_and_grad(self, q):
        return math.nan, np.zeros(1)


def test_student_t_matches_scipy():
    x = np.array([-3.0, 0.2, 4.0])
    lp, grad = student_t_logpdf(x, df=3.0, loc=0.5, scale=2.0)
    assert lp == pytest.approx(stats.t.logpdf(x, 3.0, 0.5, 2.0).sum())
    h = 1e-6
    numeric = (stats.t.logpdf(x + h, 3.0, 0.5, 2.0) - stats.t.logpdf(x - h, 3.0, 0.5, 2.0)) / (2 * h)
    np.testing.assert_allclose(grad, numeric, rtol=1e-6)


def test_half_cauchy_matches_scipy():
    x = np.array([0.1, 1.0, 7.0])
    lp, _ = half_cauchy_logpdf(x, scale=3.0)
    assert lp == pytest.approx(stats.halfcauchy.logpdf(x, scale=3.0).sum())


def test_gig_matches_scipy():
    # scipy's geninvgauss(p, b) has density ∝ x^(p-1) exp(-b(x + 1/x)/2); a = b gives scale sqrt(b/a) = 1
    x = np.array([0.3, 1.0, 2.5])
    lp, grad = gig_logpdf(x, p=0.0, a=2.0, b=2.0)
    assert lp == pytest.approx(stats.geninvgauss.logpdf(x, 0.0, 2.0).sum())
    h = 1e-6
    numeric = (stats.geninvgauss.logpdf(x + h, 0.0, 2.0) - stats.geninvgauss.logpdf(x - h, 0.0, 2.0)) / (2 * h)
    np.testing.assert_allclose(grad, numeric, rtol=1e-5)


def test_gig_density_integrates_to_one():
    total, _ = integrate.quad(lambda x: math.exp(gig_logpdf(np.array([x]), 0.0, 1.0, 2.0)[0]), 0, np.inf)
    assert total == pytest.approx(1.0, rel=1e-6)


def test_log_scale_density_includes_the_jacobian():
    prior = PriorSpec("half_student_t")
    eta = np.array([0.4])
    lp, grad = prior.logpdf_log_scale(eta)
    natural, _ = prior.logpdf(np.exp(eta))
    assert lp == pytest.approx(natural + 0.4)
    h = 1e-6
    numeric = (prior.logpdf_log_scale(eta + h)[0] - prior.logpdf_log_scale(eta - h)[0]) / (2 * h)
    assert grad[0] == pytest.approx(numeric, rel=1e-6)


def test_prior_spec_validation_and_round_trip():
    with pytest.raises(ConfigError):
        PriorSpec("laplace")
    with pytest.raises(ConfigError):
        PriorSpec("student_t", scale=0.0)
    spec = PriorSpec("half_cauchy", scale=3.0)
    assert PriorSpec.from_dict(spec.to_dict()) == spec


def test_leapfrog_conserves_energy_for_small_steps():
    model = GaussianTarget([0.0, 0.0], [1.0, 2.0])
    q = np.array([1.0, -1.0])
    p = np.array([0.5, 0.3])
    lp, grad = model.log_density_and_grad(q)
    inv_mass = np.ones(2)
    q1, p1, lp1, _, used = leapfrog(model, q, p, grad, 0.01, 100, inv_mass)
    h0 = -lp + 0.5 * np.sum(p ** 2)
    h1 = -lp1 + 0.5 * np.sum(p1 ** 2)
    assert used == 100
    assert abs(h1 - h0) < 1e-3


def test_leapfrog_is_reversible():
    model = GaussianTarget([0.0], [1.0])
    q, p = np.array([0.7]), np.array([-0.4])
    _, grad = model.log_density_and_grad(q)
    q1, p1, _, grad1, _ = leapfrog(model, q, p, grad, 0.1, 20, np.ones(1))
    q2, p2, _, _, _ = leapfrog(model, q1, -p1, grad1, 0.1, 20, np.ones(1))
    np.testing.assert_allclose(q2, q, atol=1e-12)
    np.testing.assert_allclose(-p2, p, atol=1e-12)


def test_dual_averaging_shrinks_the_step_when_rejecting():
    adapter = DualAveraging(1.0, target=0.8)
    for _ in range(50):
        step = adapter.update(0.1)
    assert step < 1.0
    assert adapter.final_step_size < 1.0


def test_adaptation_windows_fit_inside_warmup():
    windows = adaptation_windows(1000)
    assert windows[0][0] == 75
    assert windows[-1][1] == 950
    for (start, end), (nxt, _) in zip(windows, windows[1:]):
        assert end == nxt
    short = adaptation_windows(100)
    assert short[0][0] == 15
    assert short[-1][1] == 90
    assert adaptation_windows(10) == []


def test_split_rhat_near_one_for_mixed_chains():
    draws = np.random.default_rng(0).standard_normal((4, 500, 2))
    np.testing.assert_allclose(split_rhat(draws), 1.0, atol=0.02)


def test_split_rhat_flags_separated_chains():
    draws = np.random.default_rng(0).standard_normal((2, 200, 1))
    draws[1] += 5.0
    assert split_rhat(draws)[0] > 2.0


def test_hmc_recovers_a_gaussian():
    model = GaussianTarget([1.0, -2.0, 0.5], [1.0, 0.5, 3.0])
    config = HmcConfig(warmup=400, draws=800, n_leapfrog=16, chains=2, seed=1)
    run = run_hmc(model, config, init=np.zeros(3))
    flat = run.flat_draws
    assert flat.shape == (1600, 3)
    np.testing.assert_allclose(flat.mean(axis=0), model.mean, atol=0.35)
    np.testing.assert_allclose(flat.std(axis=0), model.scale, rtol=0.2)
    diag = run.diagnostics()
    assert diag["max_split_rhat"] < 1.1
    assert all(a > 0.5 for a in diag["accept_rate"])
    assert sum(diag["divergences"]) == 0
    assert set(diag["split_rhat"]) == {"x0", "x1", "x2"}


def test_hmc_is_reproducible_for_a_seed():
    model = GaussianTarget([0.0, 0.0], [1.0, 1.0])
    config = HmcConfig(warmup=50, draws=30, n_leapfrog=8, chains=2, seed=7)
    first = run_hmc(model, config, init=np.zeros(2))
    second = run_hmc(model, config, init=np.zeros(2))
    np.testing.assert_array_equal(first.draws, second.draws)


def test_non_finite_start_raises():
    with pytest.raises(SamplerError):
        run_hmc(BrokenTarget(), HmcConfig(warmup=10, draws=10, chains=1), init=np.zeros(1))


def test_hmc_config_validation():
    with pytest.raises(ConfigError):
        HmcConfig(draws=0)
    with pytest.raises(ConfigError):
        HmcConfig(target_accept=1.0)


def test_dirichlet_posterior_parameters():
    rng = np.random.default_rng(0)
    counts = np.array([30, 10, 60])
    shifted = sample_dirichlet_posterior(counts, 1.0, rng, size=20000)
    np.testing.assert_allclose(shifted.mean(axis=0), counts / counts.sum(), atol=0.005)
    standard = sample_dirichlet_posterior(counts, 1.0, rng, conjugacy="standard", size=20000)
    np.testing.assert_allclose(standard.mean(axis=0), (counts + 1) / (counts.sum() + 3), atol=0.005)


def test_dirichlet_posterior_edge_cases():
    rng = np.random.default_rng(0)
    np.testing.assert_array_equal(sample_dirichlet_posterior([7], 1.0, rng, size=3), np.ones((3, 1)))
    with pytest.raises(ConfigError):
        sample_dirichlet_posterior([0, 5], 1.0, rng)
    with pytest.raises(ConfigError):
        sample_dirichlet_posterior([3, 5], 1.0, rng, conjugacy="other")


def test_student_t_log_density_at_zero():
    lp, grad = student_t_logpdf(0.0, df=3.0)
    expected = math.lgamma(2.0) - math.lgamma(1.5) - 0.5 * math.log(3.0 * math.pi)
    assert lp == pytest.approx(expected, abs=1e-12)
    assert lp == pytest.approx(-1.0004, abs=1e-3)
    assert grad == pytest.approx(0.0)


def test_energy_error_is_small_after_warmup():
    model = GaussianTarget(np.zeros(5), np.ones(5))
    config = HmcConfig(warmup=500, draws=500, n_leapfrog=8, target_accept=0.95, chains=2, seed=2)
    diag = run_hmc(model, config, init=np.zeros(5)).diagnostics()
    assert diag["median_abs_energy_error"] < 0.2


class CorrelatedGaussian:
    def __init__(self, mean, cov):
        self.mean = np.asarray(mean, dtype=float)
        self.precision = np.linalg.inv(cov)
        self.dim = self.mean.shape[0]

    def log_density_and_grad(self, q):
        grad = -self.precision @ (q - self.mean)
        return 0.5 * (q - self.mean) @ grad, grad


def test_hmc_recovers_a_correlated_gaussian():
    cov = np.array([[1.0, 1.6], [1.6, 4.0]])
    model = CorrelatedGaussian([0.5, -1.0], cov)
    config = HmcConfig(warmup=500, draws=1000, n_leapfrog=16, chains=2, seed=9)
    flat = run_hmc(model, config, init=np.zeros(2)).flat_draws
    np.testing.assert_allclose(np.cov(flat, rowvar=False), cov, rtol=0.2)
    np.testing.assert_allclose(flat.mean(axis=0), model.mean, atol=0.25)


def test_dirichlet_posterior_moments_for_two_strata():
    draws = sample_dirichlet_posterior([3, 7], 1.0, np.random.default_rng(5), size=100_000)
    np.testing.assert_allclose(draws.mean(axis=0), [0.3, 0.7], atol=0.01)
    # Beta(3, 7) variance
    assert draws[:, 0].var() == pytest.approx(21.0 / (100.0 * 11.0), rel=0.03)
    np.testing.assert_allclose(draws.sum(axis=1), 1.0)
