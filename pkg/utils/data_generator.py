import json
import logging
from pathlib import Path

import numpy as np

from gppp.simstudy import (
    Scenario,
    SimIConfig,
    SimIIConfig,
    apply_misspecification,
    draw_samples,
    generate_population,
    schema_for,
)

logger = logging.getLogger(__name__)

DEMO_SAMPLE = "demo_sample.csv"
DEMO_CONFIG = "demo_config.json"


def demo_study(study=2, N=20_000, seed=2024):
    """Population settings for the demo; smaller than the full study so a run takes seconds"""
    if study == 1:
        return SimIConfig(N=N, n_A=500, n_R=500, K=1, seed=seed)
    return SimIIConfig(N=N, n_A=500, n_R=1000, f_kind="SIN", K=1, seed=seed)


def demo_run_config(study_config, sample_path=DEMO_SAMPLE):
    """Run configuration matching the demo sample, usable by estimate and diagnose"""
    recipes = apply_misspecification(Scenario(), study_config.study, getattr(study_config, "f_kind", "LIN"))
    return {
        "seed": study_config.seed,
        "data_path": str(sample_path),
        "population_size": study_config.N,
        "schema": schema_for(study_config.study).to_dict(),
        "estimation": {
            "methods": ["GPPP", "LWP", "AIPW", "PAPP", "UW"],
            "qr": list(recipes.qr),
            "pm": list(recipes.pm),
            "bootstrap_B": 100,
            "hmc": {"warmup": 300, "draws": 300, "chains": 2},
        },
        "simulation": {
            "study": study_config.to_dict() | {"K": 20},
            "scenarios": ["QR-T/PM-T", "QR-F/PM-T", "QR-T/PM-F", "QR-F/PM-F"],
            "methods": ["UW", "FW", "PAPP", "AIPW", "GPPP", "LWP"],
        },
    }


def generate_initial_data(data_dir="data", study=2, N=20_000, seed=2024, overwrite=False):
    """Write a pooled demo sample and its run config if they don't exist

    The sample is one Poisson draw of S_A and S_R from a Simulation I or II
    population, with the S_R outcome blinded. Returns the two paths.
    """
    data_dir = Path(data_dir)
    sample_path = data_dir / DEMO_SAMPLE
    config_path = data_dir / DEMO_CONFIG
    if sample_path.exists() and config_path.exists() and not overwrite:
        logger.info("Demo data already present in %s", data_dir)
        return sample_path, config_path

    data_dir.mkdir(parents=True, exist_ok=True)
    config = demo_study(study, N, seed)
    rng = np.random.default_rng(seed)
    population = generate_population(config, rng)
    frame, _ = draw_samples(population, config, rng)

    schema = schema_for(study)
    columns = ["in_A", "in_R", "y", "weight_R", *schema.x, *schema.d]
    if schema.pi_R:
        columns.append(schema.pi_R)
    frame[columns].to_csv(sample_path, index=False, float_format="%.10g")
    config_path.write_text(json.dumps(demo_run_config(config, sample_path), indent=2) + "\n", encoding="utf-8")

    logger.info("Wrote %d S_A and %d S_R rows to %s (population mean %.4f)",
                int(frame["in_A"].sum()), int(frame["in_R"].sum()), sample_path, population["y"].mean())
    return sample_path, config_path
