import numpy as np
import pytest

from gppp.data_model import PostStrata
from gppp.errors import ConfigError, DegenerateInputError, DimensionError, DrawMismatchError
from gppp.fpbb import PolyaPosterior, draw_polya, expand_predictions


def _strata(counts, pi, labels=None):
    counts = np.asarray(counts)
    if labels is None:
        labels = np.repeat(np.arange(len(counts)), counts)
    return PostStrata(values=1.0 / np.asarray(pi, dtype=float), counts=counts,
                      pi=np.asarray(pi, dtype=float), labels=np.asarray(labels))


def test_every_draw_totals_the_population():
    strata = _strata([40, 25, 35], [0.01, 0.02, 0.05])
    polya = draw_polya(strata, 5_000, 200, rng=np.random.default_rng(0))
    assert polya.M == 200
    assert polya.N_draws.shape == (200, 3)
    np.testing.assert_array_equal(polya.N_draws.sum(axis=1), 5_000)
    assert np.all(polya.N_draws >= strata.counts[None, :])


def test_low_probability_strata_absorb_more_units():
    # equal sample counts; the stratum sampled at 1% stands for more population units
    strata = _strata([50, 50], [0.01, 0.05])
    polya = draw_polya(strata, 6_000, 500, rng=np.random.default_rng(1))
    mean = polya.N_draws.mean(axis=0)
    assert mean[0] > 3 * mean[1]


def test_population_equal_to_sample_is_deterministic():
    strata = _strata([3, 7], [0.5, 0.5])
    polya = draw_polya(strata, 10, 4, rng=np.random.default_rng(0))
    np.testing.assert_array_equal(polya.N_draws, np.tile([3, 7], (4, 1)))


def test_single_stratum_takes_everything():
    strata = _strata([20], [0.1])
    polya = draw_polya(strata, 200, 5, rng=np.random.default_rng(0))
    np.testing.assert_array_equal(polya.N_draws, np.full((5, 1), 200))


def test_self_representing_stratum_gets_no_extra_units():
    strata = _strata([10, 30], [1.0, 0.1])
    polya = draw_polya(strata, 400, 50, rng=np.random.default_rng(2))
    np.testing.assert_array_equal(polya.N_draws[:, 0], 10)


def test_same_seed_same_draws():
    strata = _strata([40, 25, 35], [0.01, 0.02, 0.05])
    first = draw_polya(strata, 5_000, 20, rng=np.random.default_rng([4, 3]))
    second = draw_polya(strata, 5_000, 20, rng=np.random.default_rng([4, 3]))
    np.testing.assert_array_equal(first.N_draws, second.N_draws)


def test_conjugacy_variants_differ_for_sparse_strata():
    strata = _strata([1, 40], [0.02, 0.02])
    shifted = draw_polya(strata, 4_000, 2_000, rng=np.random.default_rng(0))
    standard = draw_polya(strata, 4_000, 2_000, rng=np.random.default_rng(0), conjugacy="standard")
    # Dirichlet(1, 40) vs Dirichlet(2, 41): the singleton stratum gets a larger share under the standard form
    assert standard.xi_draws[:, 0].mean() > shifted.xi_draws[:, 0].mean()


def test_invalid_inputs():
    strata = _strata([5, 5], [0.1, 0.1])
    with pytest.raises(ConfigError):
        draw_polya(strata, 8, 10)
    with pytest.raises(ConfigError):
        draw_polya(strata, 100, 0)
    with pytest.raises(DegenerateInputError):
        draw_polya(_strata([5, 5], [1.0, 1.0]), 100, 10)


def test_expansion_scales_stratum_sums():
    strata = _strata([2, 1], [0.1, 0.1], labels=[0, 0, 1])
    polya = PolyaPosterior(N_draws=np.array([[20, 10], [10, 20]]), xi_draws=np.full((2, 2), 0.5), N=30)
    y = np.array([[1.0, 3.0, 5.0], [1.0, 3.0, 5.0]])
    # draw 1: 20/2 * 4 + 10/1 * 5; draw 2: 10/2 * 4 + 20/1 * 5
    np.testing.assert_allclose(expand_predictions(polya, strata, y), [90.0, 120.0])


def test_constant_predictions_expand_to_n_times_the_constant():
    strata = _strata([40, 25, 35], [0.01, 0.02, 0.05])
    polya = draw_polya(strata, 5_000, 10, rng=np.random.default_rng(0))
    y = np.full((10, 100), 2.5)
    np.testing.assert_allclose(expand_predictions(polya, strata, y), 2.5 * 5_000)


def test_expansion_shape_checks():
    strata = _strata([2, 1], [0.1, 0.1], labels=[0, 0, 1])
    polya = PolyaPosterior(N_draws=np.array([[20, 10]]), xi_draws=np.full((1, 2), 0.5), N=30)
    with pytest.raises(DrawMismatchError):
        expand_predictions(polya, strata, np.ones((2, 3)))
    with pytest.raises(DimensionError):
        expand_predictions(polya, strata, np.ones((1, 4)))
    with pytest.raises(DegenerateInputError):
        expand_predictions(polya, strata, np.ones((1, 3)), labels=np.array([0, 0, 0]))


def test_mean_allocation_matches_a_two_stage_simulation():
    counts, pi = np.array([40, 25, 35]), np.array([0.01, 0.02, 0.05])
    N = 5_000
    polya = draw_polya(_strata(counts, pi), N, 20_000, rng=np.random.default_rng(3))
    # stage one: shares from Dirichlet(n_j); stage two: expected multinomial counts
    xi = np.random.default_rng(4).dirichlet(counts.astype(float), size=200_000)
    tilted = xi * (1.0 - pi) / pi
    tilted /= tilted.sum(axis=1, keepdims=True)
    expected = counts + (N - counts.sum()) * tilted.mean(axis=0)
    np.testing.assert_allclose(polya.N_draws.mean(axis=0), expected, rtol=0.01)


def test_expansion_is_linear_in_the_predictions():
    strata = _strata([40, 25, 35], [0.01, 0.02, 0.05])
    polya = draw_polya(strata, 5_000, 6, rng=np.random.default_rng(0))
    rng = np.random.default_rng(1)
    y, z = rng.normal(size=(6, 100)), rng.normal(size=(6, 100))
    a, b = 2.5, -0.75
    combined = expand_predictions(polya, strata, a * y + b * z)
    separate = a * expand_predictions(polya, strata, y) + b * expand_predictions(polya, strata, z)
    np.testing.assert_allclose(combined, separate, rtol=1e-10, atol=1e-8)
