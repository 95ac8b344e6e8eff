"""Command-line entry point: estimate, simulate and diagnose.

    python -m gppp estimate --config cfg.json --data data.csv --out dir
    python -m gppp simulate --config sim.json --workers 8 --out dir
    python -m gppp diagnose --config cfg.json --data data.csv --out dir

Structural settings live in the JSON config; flags only carry paths, the
seed and the worker count.
"""

import argparse
import json
import logging
import subprocess
import sys
import time
from dataclasses import replace
from pathlib import Path

import numpy as np
import pandas as pd

from gppp import __version__
from gppp.config import load_run_config
from gppp.data_model import load_combined
from gppp.diagnostics import diagnose
from gppp.errors import (
    BootstrapFailureError,
    ConfigError,
    DimensionError,
    GpppError,
    ReplicationError,
    SamplerError,
    ValidationError,
)
from gppp.estimators import estimate_method
from gppp.logging_setup import configure_logging
from gppp.simstudy import Scenario, evaluate_recipe, run_replications

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_INVALID = 2
EXIT_FAILED_RUN = 3


def exit_code_for(exc):
    if isinstance(exc, (ValidationError, ConfigError, DimensionError)):
        return EXIT_INVALID
    if isinstance(exc, (SamplerError, ReplicationError, BootstrapFailureError)):
        return EXIT_FAILED_RUN
    return EXIT_ERROR


def version_string():
    """git-describe of the working tree, falling back to the package version"""
    try:
        result = subprocess.run(["git", "describe", "--tags", "--always", "--dirty"],
                                capture_output=True, text=True, timeout=5,
                                cwd=Path(__file__).resolve().parent)
        if result.returncode == 0 and result.stdout.strip():
            return result.stdout.strip()
    except (OSError, subprocess.SubprocessError):
        pass
    return __version__


def write_json(path, payload):
    path.write_text(json.dumps(payload, indent=2, sort_keys=True, default=_json_default) + "\n",
                    encoding="utf-8")


def _json_default(value):
    if isinstance(value, np.generic):
        return value.item()
    if isinstance(value, np.ndarray):
        return value.tolist()
    raise TypeError(f"cannot serialize {type(value).__name__}")


def write_manifest(out_dir, config, timings, status, **extra):
    write_json(out_dir / "manifest.json", {
        "version": version_string(),
        "seed": config.seed,
        "config": config.to_dict(),
        "timings_seconds": timings,
        "status": status,
        **extra,
    })


def _designs(sample, estimation):
    frame = sample.frame()
    qr = evaluate_recipe(frame, estimation.qr) if estimation.qr else None
    pm = evaluate_recipe(frame, estimation.pm) if estimation.pm else None
    return qr, pm


def cmd_estimate(config, out_dir, workers=1):
    timings = {}
    started = time.perf_counter()
    sample = load_combined(config.data_path, config.schema, config.population_size)
    qr_design, pm_design = _designs(sample, config.estimation)
    timings["load"] = time.perf_counter() - started

    reports = []
    draws = {}
    diagnostics = {}
    status = "ok"
    try:
        for method in config.estimation.methods:
            t0 = time.perf_counter()
            report = estimate_method(method, sample, config.estimation, qr_design, pm_design,
                                     seed=config.seed, workers=workers)
            timings[method] = time.perf_counter() - t0
            sampler = report.metadata.pop("sampler", None)
            if sampler is not None:
                diagnostics[method] = sampler
            reports.append(report.to_dict())
            if report.draws is not None:
                draws[method] = report.draws
    except GpppError as exc:
        status = type(exc).__name__
        diagnostics["failure"] = {"message": str(exc), **getattr(exc, "diagnostics", {})}
        raise
    finally:
        write_json(out_dir / "estimate_report.json", {"N": sample.N, "n_A": sample.n_A,
                                                      "n_R": sample.n_R, "estimates": reports})
        write_json(out_dir / "diagnostics.json", diagnostics)
        if draws:
            # bootstrap methods may have fewer replicates than posterior draws
            frame = pd.DataFrame({name: pd.Series(values) for name, values in draws.items()})
            frame.index.name = "draw"
            frame.to_csv(out_dir / "draws.csv", float_format="%.17g")
        timings["total"] = time.perf_counter() - started
        write_manifest(out_dir, config, timings, status)
    return EXIT_OK


def cmd_simulate(config, out_dir, workers=1):
    started = time.perf_counter()
    simulation = config.simulation
    study = replace(simulation.study, seed=config.seed)
    metrics, replicates, truth_mean = run_replications(study, simulation.methods, simulation.scenarios,
                                                       config.estimation, workers=workers)
    metrics.to_csv(out_dir / "metrics.csv", index=False, float_format="%.10g")
    replicates.to_csv(out_dir / "replicates.csv", index=False, float_format="%.17g")
    write_manifest(out_dir, config, {"total": time.perf_counter() - started}, "ok",
                   population_mean=truth_mean)
    return EXIT_OK


def cmd_diagnose(config, out_dir, workers=1):
    started = time.perf_counter()
    sample = load_combined(config.data_path, config.schema, config.population_size)
    qr_design, _ = _designs(sample, config.estimation)
    bundle = diagnose(sample, qr_design, use_known_pi_R=config.estimation.use_known_pi_R)
    write_json(out_dir / "diagnostics.json", bundle)
    write_manifest(out_dir, config, {"total": time.perf_counter() - started}, "ok")
    return EXIT_OK


COMMAND_HANDLERS = {"estimate": cmd_estimate, "simulate": cmd_simulate, "diagnose": cmd_diagnose}


def build_parser():
    parser = argparse.ArgumentParser(prog="gppp", description="Doubly robust estimation for non-probability samples")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, needs_data in (("estimate", True), ("simulate", False), ("diagnose", True)):
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="JSON run configuration")
        if needs_data:
            p.add_argument("--data", help="pooled sample CSV (overrides data_path in the config)")
        p.add_argument("--out", required=True, help="output directory")
        p.add_argument("--seed", type=int, help="master seed (overrides the config)")
        p.add_argument("--workers", type=int, default=1, help="parallel worker processes")
        p.add_argument("--log-level", default="INFO")
        if name == "simulate":
            p.add_argument("--scenario-grid", help="JSON file with a list of scenario labels")
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    configure_logging(args.log_level, out_dir / "run.log")
    try:
        config = load_run_config(args.config, args.command, seed=args.seed,
                                 data_path=getattr(args, "data", None), output_dir=str(out_dir))
        if getattr(args, "scenario_grid", None):
            config = _with_scenario_grid(config, args.scenario_grid)
        if config.command != "simulate" and not config.data_path:
            raise ConfigError("no input data: pass --data or set data_path in the config")
        code = COMMAND_HANDLERS[config.command](config, out_dir, workers=args.workers)
    except GpppError as exc:
        code = exit_code_for(exc)
        logger.error("%s failed (exit %d): %s", args.command, code, exc)
        print(f"error: {exc}", file=sys.stderr)
    except FileNotFoundError as exc:
        code = EXIT_INVALID
        logger.error("%s", exc)
        print(f"error: {exc}", file=sys.stderr)
    return code


def _with_scenario_grid(config, grid_path):
    try:
        labels = json.loads(Path(grid_path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read scenario grid {grid_path}: {exc}") from exc
    scenarios = tuple(Scenario.parse(label) for label in labels)
    return replace(config, simulation=replace(config.simulation, scenarios=scenarios))


if __name__ == "__main__":
    sys.exit(main())
