import numpy as np
import pandas as pd
import pytest

from gppp.data_model import SampleSchema, sample_from_frame
from gppp.errors import DimensionError
from gppp.papp import estimate_papp, hajek_mean, papp_point, papp_weighted_mean, qr_design


def test_pseudo_probabilities_lie_in_unit_interval(sim2_sample):
    fit = estimate_papp(sim2_sample)
    assert fit.pi_A.shape == (sim2_sample.n_C,)
    assert np.all(fit.pi_A > 0)
    assert np.all(fit.pi_A <= 1)
    assert fit.gamma.shape == (2,)
    assert fit.phi.shape == (2,)


def test_inverse_pseudo_probabilities_total_the_population(sim2_config, sim2_sample):
    fit = estimate_papp(sim2_sample)
    assert fit.converged
    total = np.sum(1.0 / fit.pi_for(sim2_sample))
    assert total == pytest.approx(sim2_config.N, rel=0.3)


def test_known_reference_probabilities_skip_the_weight_model(sim1_sample):
    fit = estimate_papp(sim1_sample)
    assert fit.gamma.size == 0
    assert fit.weight_dispersion is None
    Z = np.column_stack([np.ones(sim1_sample.n_C), sim1_sample.X])
    np.testing.assert_allclose(fit.log_pi, np.log(sim1_sample.pi_R) + Z @ fit.phi)

    regressed = estimate_papp(sim1_sample, use_known_pi_R=False)
    assert regressed.gamma.size == 5


def test_constant_weights_make_pi_proportional_to_odds():
    rng = np.random.default_rng(3)
    n_A, n_R = 150, 300
    x = rng.standard_normal(n_A + n_R)
    frame = pd.DataFrame({
        "in_A": np.r_[np.ones(n_A), np.zeros(n_R)].astype(int),
        "in_R": np.r_[np.zeros(n_A), np.ones(n_R)].astype(int),
        "y": np.r_[rng.standard_normal(n_A), np.full(n_R, np.nan)],
        "weight_R": np.r_[np.full(n_A, np.nan), np.full(n_R, 20.0)],
        "x": x,
    })
    sample = sample_from_frame(frame, SampleSchema(x=("x",)), population_size=6000)
    fit = estimate_papp(sample)
    # with a flat weight model, gamma is (log 20, 0): log pi = log odds - log 20
    np.testing.assert_allclose(fit.gamma, [np.log(20.0), 0.0], atol=1e-6)
    Z = np.column_stack([np.ones(sample.n_C), x])
    np.testing.assert_allclose(fit.log_pi, Z @ fit.phi - np.log(20.0), atol=1e-6)


def test_clamping_is_counted():
    rng = np.random.default_rng(9)
    n_A, n_R = 400, 100
    frame = pd.DataFrame({
        "in_A": np.r_[np.ones(n_A), np.zeros(n_R)].astype(int),
        "in_R": np.r_[np.zeros(n_A), np.ones(n_R)].astype(int),
        "y": np.r_[rng.standard_normal(n_A), np.full(n_R, np.nan)],
        "weight_R": np.r_[np.full(n_A, np.nan), np.full(n_R, 1.01)],
        # S_A sits to the right, so only part of the pooled odds exceed 1
        "x": np.r_[rng.normal(1.0, 1.0, n_A), rng.normal(-1.0, 1.0, n_R)],
    })
    sample = sample_from_frame(frame, SampleSchema(x=("x",)), population_size=600)
    fit = estimate_papp(sample)
    assert fit.clamped_count > 0
    assert np.all(fit.pi_A <= 1.0)


def test_hajek_mean_normalizes_by_weight_total():
    assert hajek_mean([1.0, 3.0], [0.5, 0.5]) == pytest.approx(2.0)
    assert hajek_mean([1.0, 3.0], [1.0, 1.0 / 3.0]) == pytest.approx((1.0 + 9.0) / 4.0)


def test_papp_report_uses_the_hajek_point(sim2_sample):
    fit = estimate_papp(sim2_sample)
    report = papp_weighted_mean(sim2_sample, fit)
    assert report.method == "PAPP"
    assert report.point == pytest.approx(papp_point(sim2_sample, fit))
    assert report.interval_kind == "normal"


def test_qr_design_row_check(sim2_sample):
    assert qr_design(sim2_sample) is sim2_sample.X
    assert qr_design(sim2_sample, np.ones(sim2_sample.n_C)).shape == (sim2_sample.n_C, 1)
    with pytest.raises(DimensionError):
        qr_design(sim2_sample, np.ones((3, 1)))


def test_two_unit_hajek_mean():
    assert hajek_mean([0.0, 10.0], [0.1, 0.9]) == pytest.approx(1.0)


@pytest.mark.parametrize("scale", [1e-3, 0.5, 7.0])
def test_hajek_mean_ignores_a_common_rescaling(scale):
    rng = np.random.default_rng(3)
    y = rng.normal(5.0, 2.0, 40)
    pi = rng.uniform(0.05, 0.9, 40)
    assert hajek_mean(y, scale * pi) == pytest.approx(hajek_mean(y, pi), rel=1e-12)
