import json

import numpy as np
import pandas as pd
import pytest

from gppp.cli import EXIT_FAILED_RUN, EXIT_INVALID, EXIT_OK, exit_code_for, main
from gppp.errors import BootstrapFailureError, ConfigError, SamplerError, SingularDesignError
from gppp.simstudy import SimIIConfig, generate_population


@pytest.fixture
def sample_csv(tmp_path, sim2_frame):
    path = tmp_path / "sample.csv"
    sim2_frame.to_csv(path, index=False)
    return path


def _write_config(path, methods, **estimation):
    payload = {
        "seed": 31,
        "population_size": 5_000,
        "schema": {"x": ["x"], "d": ["d"]},
        "estimation": {"methods": methods, "bootstrap_B": 10, **estimation},
    }
    path.write_text(json.dumps(payload), encoding="utf-8")
    return path


def test_estimate_writes_every_artifact(tmp_path, sample_csv):
    config = _write_config(tmp_path / "run.json", ["UW", "PAPP", "AIPW"], pm=["x", "d", "x*d"])
    out = tmp_path / "out"
    assert main(["estimate", "--config", str(config), "--data", str(sample_csv), "--out", str(out)]) == EXIT_OK
    report = json.loads((out / "estimate_report.json").read_text())
    assert [e["method"] for e in report["estimates"]] == ["UW", "PAPP", "AIPW"]
    assert report["N"] == 5_000
    draws = pd.read_csv(out / "draws.csv", index_col="draw")
    assert list(draws.columns) == ["PAPP", "AIPW"]
    assert len(draws) == 10
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["seed"] == 31
    assert manifest["status"] == "ok"
    assert manifest["config"]["data_path"] == str(sample_csv)
    assert (out / "run.log").exists()


def test_estimate_output_does_not_depend_on_workers(tmp_path, sample_csv):
    config = _write_config(tmp_path / "run.json", ["PAPP", "AIPW"])
    outputs = []
    for workers in ("1", "2"):
        out = tmp_path / f"out{workers}"
        main(["estimate", "--config", str(config), "--data", str(sample_csv), "--out", str(out),
              "--workers", workers])
        outputs.append(((out / "estimate_report.json").read_bytes(), (out / "draws.csv").read_bytes()))
    assert outputs[0] == outputs[1]


def test_estimate_with_a_bayesian_method(tmp_path, sample_csv):
    config = _write_config(tmp_path / "run.json", ["PM"],
                           hmc={"warmup": 40, "draws": 20, "n_leapfrog": 8, "chains": 2})
    out = tmp_path / "out"
    assert main(["estimate", "--config", str(config), "--data", str(sample_csv), "--out", str(out)]) == EXIT_OK
    diagnostics = json.loads((out / "diagnostics.json").read_text())
    assert len(diagnostics["PM"]["accept_rate"]) == 2
    assert len(pd.read_csv(out / "draws.csv")) == 40


def test_diagnose_command(tmp_path, sample_csv):
    config = _write_config(tmp_path / "run.json", ["UW"])
    out = tmp_path / "out"
    assert main(["diagnose", "--config", str(config), "--data", str(sample_csv), "--out", str(out)]) == EXIT_OK
    bundle = json.loads((out / "diagnostics.json").read_text())
    assert {"overlap", "pseudo_weights", "smoother"} <= set(bundle)


def test_simulate_command(tmp_path):
    config = tmp_path / "sim.json"
    config.write_text(json.dumps({
        "simulation": {
            "study": {"study": 2, "N": 3_000, "n_A": 100, "n_R": 150, "K": 2},
            "methods": ["UW", "FW", "PAPP"],
        },
        "estimation": {"bootstrap_B": 5},
    }), encoding="utf-8")
    grid = tmp_path / "grid.json"
    grid.write_text(json.dumps(["QR-T/PM-T", "QR-F/PM-T"]), encoding="utf-8")
    out = tmp_path / "out"
    code = main(["simulate", "--config", str(config), "--out", str(out), "--seed", "8",
                 "--scenario-grid", str(grid)])
    assert code == EXIT_OK
    metrics = pd.read_csv(out / "metrics.csv")
    assert len(metrics) == 6
    assert set(metrics["scenario"]) == {"QR-T/PM-T", "QR-F/PM-T"}
    replicates = pd.read_csv(out / "replicates.csv")
    assert set(replicates["k"]) == {1, 2}
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["seed"] == 8
    assert "population_mean" not in manifest["timings_seconds"]
    study = SimIIConfig(N=3_000, n_A=100, n_R=150, K=2, seed=8)
    truth = generate_population(study, np.random.default_rng(8))["y"].mean()
    assert manifest["population_mean"] == pytest.approx(truth, rel=1e-12)


def test_invalid_config_exits_with_two(tmp_path, sample_csv):
    config = _write_config(tmp_path / "run.json", ["MRP"])
    out = tmp_path / "out"
    assert main(["estimate", "--config", str(config), "--data", str(sample_csv), "--out", str(out)]) == EXIT_INVALID


def test_missing_data_exits_with_two(tmp_path):
    config = _write_config(tmp_path / "run.json", ["UW"])
    assert main(["estimate", "--config", str(config), "--out", str(tmp_path / "out")]) == EXIT_INVALID
    missing = tmp_path / "nope.csv"
    assert main(["estimate", "--config", str(config), "--data", str(missing),
                 "--out", str(tmp_path / "out2")]) == EXIT_INVALID


def test_exit_codes():
    assert exit_code_for(ConfigError("x")) == EXIT_INVALID
    assert exit_code_for(SamplerError("x")) == EXIT_FAILED_RUN
    assert exit_code_for(BootstrapFailureError("x")) == EXIT_FAILED_RUN
    assert exit_code_for(SingularDesignError("x")) == 1
