import numpy as np
import pandas as pd
import pytest

from gppp.bayes_core import HmcConfig
from gppp.data_model import SampleSchema, sample_from_frame
from gppp.simstudy import SimIConfig, SimIIConfig, draw_samples, generate_population, schema_for


def pytest_addoption(parser):
    parser.addoption("--runslow", action="store_true", default=False, help="run replication-scale tests")


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: replication-scale run, skipped without --runslow")


def pytest_collection_modifyitems(config, items):
    if config.getoption("--runslow"):
        return
    skip_slow = pytest.mark.skip(reason="needs --runslow")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip_slow)


@pytest.fixture(autouse=True)
def _seed_required(monkeypatch):
    monkeypatch.setenv("GPPP_TEST_MODE", "1")


@pytest.fixture(scope="session")
def sim2_config():
    return SimIIConfig(N=5_000, n_A=200, n_R=300, f_kind="LIN", K=1, seed=11)


@pytest.fixture(scope="session")
def sim2_population(sim2_config):
    return generate_population(sim2_config, np.random.default_rng(sim2_config.seed))


@pytest.fixture(scope="session")
def sim2_frame(sim2_config, sim2_population):
    frame, _ = draw_samples(sim2_population, sim2_config, np.random.default_rng([sim2_config.seed, 1]))
    return frame


@pytest.fixture
def sim2_sample(sim2_frame, sim2_config):
    return sample_from_frame(sim2_frame, schema_for(2), population_size=sim2_config.N)


@pytest.fixture(scope="session")
def sim1_config():
    return SimIConfig(N=5_000, n_A=200, n_R=200, K=1, seed=5)


@pytest.fixture
def sim1_sample(sim1_config):
    population = generate_population(sim1_config, np.random.default_rng(sim1_config.seed))
    frame, _ = draw_samples(population, sim1_config, np.random.default_rng([sim1_config.seed, 1]))
    return sample_from_frame(frame, schema_for(1), population_size=sim1_config.N)


@pytest.fixture
def tiny_schema():
    return SampleSchema(x=("x",))


@pytest.fixture
def tiny_frame():
    """Three S_A rows then three S_R rows with two weight levels"""
    return pd.DataFrame({
        "in_A": [1, 1, 1, 0, 0, 0],
        "in_R": [0, 0, 0, 1, 1, 1],
        "y": [1.0, 2.0, 3.0, np.nan, np.nan, np.nan],
        "weight_R": [np.nan, np.nan, np.nan, 10.0, 10.0, 20.0],
        "x": [0.1, 0.5, 0.9, 0.2, 0.4, 0.8],
    })


@pytest.fixture
def fast_hmc():
    return HmcConfig(warmup=150, draws=100, n_leapfrog=16, chains=2, seed=3)
