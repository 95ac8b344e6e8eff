import numpy as np
import pytest
from scipy import optimize, special

from gppp.errors import ConfigError, DimensionError, SingularDesignError
from gppp.glm_core import GlmFit, GlmSpec, fit_glm, glm_score, predict_glm


@pytest.fixture
def rng():
    return np.random.default_rng(42)


def test_logistic_fit_recovers_coefficients(rng):
    x = rng.standard_normal((4000, 2))
    eta = -0.5 + 1.0 * x[:, 0] - 0.7 * x[:, 1]
    y = (rng.uniform(size=4000) < 1.0 / (1.0 + np.exp(-eta))).astype(float)
    spec = GlmSpec("bernoulli_logit")
    fit = fit_glm(spec, x, y)
    assert fit.converged
    np.testing.assert_allclose(fit.coefficients, [-0.5, 1.0, -0.7], atol=0.15)
    assert np.max(np.abs(glm_score(spec, fit.coefficients, x, y))) < 1e-6


def test_gaussian_identity_matches_least_squares(rng):
    x = rng.standard_normal((200, 3))
    y = 1.0 + x @ np.array([0.5, -1.0, 2.0]) + 0.1 * rng.standard_normal(200)
    spec = GlmSpec("gaussian_identity", ridge=0.0)
    fit = fit_glm(spec, x, y)
    Z = np.column_stack([np.ones(200), x])
    expected, *_ = np.linalg.lstsq(Z, y, rcond=None)
    np.testing.assert_allclose(fit.coefficients, expected, atol=1e-8)
    assert fit.dispersion == pytest.approx(np.sum((y - Z @ expected) ** 2) / (200 - 4), rel=1e-6)


def test_log_mean_regression_of_weights(rng):
    x = rng.uniform(-1, 1, (1500, 1))
    mean = np.exp(2.0 + 0.8 * x[:, 0])
    w = mean + 0.5 * rng.standard_normal(1500)
    spec = GlmSpec("gaussian_logmean")
    fit = fit_glm(spec, x, w)
    assert fit.converged
    np.testing.assert_allclose(fit.coefficients, [2.0, 0.8], atol=0.02)
    np.testing.assert_allclose(predict_glm(fit, spec, x), mean, rtol=0.05)


def test_negative_binomial_with_exposure(rng):
    n = 3000
    x = rng.standard_normal((n, 1))
    exposure = rng.uniform(0.5, 3.0, n)
    mu = exposure * np.exp(0.3 + 0.5 * x[:, 0])
    size = 4.0
    y = rng.negative_binomial(size, size / (size + mu)).astype(float)
    spec = GlmSpec("negbinom_log")
    fit = fit_glm(spec, x, y, exposure=exposure)
    np.testing.assert_allclose(fit.coefficients, [0.3, 0.5], atol=0.08)
    assert fit.dispersion == pytest.approx(1.0 / size, abs=0.08)


def test_case_weights_equal_row_duplication(rng):
    x = rng.standard_normal((60, 1))
    y = (rng.uniform(size=60) < 0.4).astype(float)
    counts = rng.integers(1, 4, 60)
    spec = GlmSpec("bernoulli_logit")
    weighted = fit_glm(spec, x, y, case_weights=counts.astype(float))
    duplicated = fit_glm(spec, np.repeat(x, counts, axis=0), np.repeat(y, counts))
    np.testing.assert_allclose(weighted.coefficients, duplicated.coefficients, atol=1e-6)


def test_separated_data_stays_finite_with_ridge():
    x = np.array([[-2.0], [-1.0], [1.0], [2.0]])
    y = np.array([0.0, 0.0, 1.0, 1.0])
    fit = fit_glm(GlmSpec("bernoulli_logit", ridge=1e-3), x, y)
    assert np.all(np.isfinite(fit.coefficients))
    assert fit.coefficients[1] > 0


def test_rank_deficient_design_without_ridge():
    x = np.column_stack([np.arange(10.0), 2.0 * np.arange(10.0)])
    y = np.arange(10.0)
    with pytest.raises(SingularDesignError):
        fit_glm(GlmSpec("gaussian_identity", ridge=0.0), x, y)


def test_shape_and_spec_errors():
    with pytest.raises(ConfigError):
        GlmSpec("poisson")
    with pytest.raises(DimensionError):
        fit_glm(GlmSpec("gaussian_identity"), np.ones((5, 1)), np.ones(4))
    fit = fit_glm(GlmSpec("gaussian_identity"), np.arange(5.0), np.arange(5.0))
    with pytest.raises(DimensionError):
        predict_glm(fit, GlmSpec("gaussian_identity"), np.ones((5, 2)))


def test_intercept_only_logit_is_the_logit_of_the_mean():
    y = np.array([1.0] * 7 + [0.0] * 3)
    fit = fit_glm(GlmSpec("bernoulli_logit", ridge=0.0), np.empty((10, 0)), y)
    assert fit.coefficients[0] == pytest.approx(special.logit(0.7), abs=1e-6)


def test_constant_weights_give_log_intercept():
    fit = fit_glm(GlmSpec("gaussian_logmean", ridge=0.0), np.empty((8, 0)), np.full(8, 3.0))
    assert fit.coefficients[0] == pytest.approx(np.log(3.0), abs=1e-8)


def test_row_order_does_not_change_the_fit(rng):
    x = rng.standard_normal((300, 2))
    y = (rng.uniform(size=300) < special.expit(0.3 + x[:, 0])).astype(float)
    spec = GlmSpec("bernoulli_logit")
    order = rng.permutation(300)
    np.testing.assert_allclose(fit_glm(spec, x[order], y[order]).coefficients,
                               fit_glm(spec, x, y).coefficients, rtol=1e-10, atol=1e-12)


def test_tiny_ridge_matches_no_ridge(rng):
    x = rng.standard_normal((400, 2))
    y = (rng.uniform(size=400) < special.expit(-0.2 + 0.8 * x[:, 1])).astype(float)
    plain = fit_glm(GlmSpec("bernoulli_logit", ridge=0.0), x, y)
    tiny = fit_glm(GlmSpec("bernoulli_logit", ridge=1e-10), x, y)
    np.testing.assert_allclose(tiny.coefficients, plain.coefficients, atol=1e-6)


def test_zero_coefficients_predict_the_link_at_zero():
    fit = GlmFit(coefficients=np.zeros(2), converged=True, iterations=0, log_likelihood=0.0)
    design = np.linspace(-1.0, 1.0, 5)
    np.testing.assert_allclose(predict_glm(fit, GlmSpec("bernoulli_logit"), design), 0.5)
    np.testing.assert_allclose(predict_glm(fit, GlmSpec("gaussian_logmean"), design), 1.0)


def test_logistic_fit_agrees_with_a_generic_optimizer(rng):
    x = rng.standard_normal((500, 2))
    y = (rng.uniform(size=500) < special.expit(0.4 - 0.6 * x[:, 0] + 0.9 * x[:, 1])).astype(float)
    Z = np.column_stack([np.ones(500), x])

    def negative_loglik(beta):
        eta = Z @ beta
        return np.mean(np.logaddexp(0.0, eta) - y * eta)

    def gradient(beta):
        return Z.T @ (special.expit(Z @ beta) - y) / 500

    oracle = optimize.minimize(negative_loglik, np.zeros(3), jac=gradient, method="BFGS",
                               options={"gtol": 1e-12, "maxiter": 1000})
    fit = fit_glm(GlmSpec("bernoulli_logit", ridge=0.0, tol=1e-12), x, y)
    np.testing.assert_allclose(fit.coefficients, oracle.x, atol=1e-6)
