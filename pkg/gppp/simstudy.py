"""Repeated-sampling study: finite populations, Poisson samples, working-model
recipes and the five performance metrics.

Study 1 has four linearly related covariates with a known reference
inclusion probability; study 2 has one selection covariate x, one outcome
covariate d and a choice of nonlinear mean functions.
"""

import logging
import math
from dataclasses import asdict, dataclass, replace

import numpy as np
import pandas as pd
from joblib import Parallel, delayed
from scipy import optimize, special

from gppp.data_model import SampleSchema, sample_from_frame
from gppp.errors import ConfigError, GpppError, ReplicationError
from gppp.estimators import estimate_method, naive_mean

logger = logging.getLogger(__name__)

F_KINDS = {
    "LIN": "x",
    "CUB": "(x/3)**3",
    "EXP": "exp(x/2)/5",
    "SIN": f"5*sin({math.pi / 3!r}*x)",
}
OUTCOME_KINDS = ("continuous", "binary")
MAX_FAILURE_RATE = 0.05
NAIVE_METHODS = ("UW_A", "FW_A", "UW_R", "FW_R")
METHOD_ALIASES = {"UW": "UW_A", "FW": "FW_A"}


@dataclass(frozen=True)
class SimIConfig:
    N: int = 100_000
    n_A: int = 500
    n_R: int = 500
    rho_target: float = 0.8
    K: int = 216
    seed: int = 0

    study = 1

    def __post_init__(self):
        if self.n_A + self.n_R >= self.N:
            raise ConfigError("population must be much larger than both samples")
        if not 0 < self.rho_target < 1:
            raise ConfigError("rho_target must lie in (0, 1)")
        if self.K < 1:
            raise ConfigError("K must be at least 1")

    def to_dict(self):
        return {"study": 1, **asdict(self)}


@dataclass(frozen=True)
class SimIIConfig:
    N: int = 100_000
    n_A: int = 500
    n_R: int = 1000
    rho: float = 0.5
    gamma2: float = 0.3
    f_kind: str = "LIN"
    outcome: str = "continuous"
    K: int = 216
    seed: int = 0

    study = 2

    def __post_init__(self):
        if self.n_A + self.n_R >= self.N:
            raise ConfigError("population must be much larger than both samples")
        if not 0 <= self.rho <= 0.95:
            raise ConfigError("rho must lie in [0, 0.95]")
        if self.f_kind not in F_KINDS:
            raise ConfigError(f"unknown f_kind '{self.f_kind}'; expected one of {tuple(F_KINDS)}")
        if self.outcome not in OUTCOME_KINDS:
            raise ConfigError(f"unknown outcome '{self.outcome}'; expected one of {OUTCOME_KINDS}")
        if self.K < 1:
            raise ConfigError("K must be at least 1")

    def to_dict(self):
        return {"study": 2, **asdict(self)}


def calibrate_intercept(linear, target, bracket=(-60.0, 60.0)):
    """Intercept c with Σ expit(c + linear) = target (the map is increasing in c)"""
    linear = np.asarray(linear, dtype=float)

    def excess(c):
        return np.sum(special.expit(c + linear)) - target

    low, high = bracket
    if excess(low) > 0 or excess(high) < 0:
        raise ConfigError(f"target expected size {target} is not bracketed by intercepts {bracket}")
    return optimize.brentq(excess, low, high, xtol=1e-12, rtol=1e-14, maxiter=500)


def noise_scale(signal, rho):
    """σ giving corr(signal + σε, signal) = rho"""
    return float(np.std(signal) * math.sqrt(1.0 / rho ** 2 - 1.0))


def gen_population_sim1(config, rng):
    N = config.N
    z1 = rng.binomial(1, 0.5, N).astype(float)
    z2 = rng.uniform(0.0, 2.0, N)
    z3 = rng.exponential(1.0, N)
    z4 = rng.chisquare(4, N)
    x1 = z1
    x2 = z2 + 0.3 * z1
    x3 = z3 + 0.2 * (x1 + x2)
    x4 = z4 + 0.1 * (x1 + x2 + x3)
    signal = x1 + x2 + x3 + x4
    sigma = noise_scale(signal, config.rho_target)
    y = 2.0 + signal + sigma * rng.standard_normal(N)

    linear_A = 0.1 * x1 + 0.2 * x2 + 0.1 * x3 + 0.2 * x4
    gamma0 = calibrate_intercept(linear_A, config.n_A)
    pi_A = special.expit(gamma0 + linear_A)

    # max/min of (γ1 + z3) equals 50
    gamma1 = (z3.max() - 50.0 * z3.min()) / 49.0
    size = gamma1 + z3
    pi_R = np.minimum(size * config.n_R / size.sum(), 1.0)

    logger.info("Study 1 population: N=%d sigma=%.4f gamma0=%.4f gamma1=%.4f", N, sigma, gamma0, gamma1)
    frame = pd.DataFrame({"x1": x1, "x2": x2, "x3": x3, "x4": x4, "y": y, "pi_A": pi_A, "pi_R": pi_R})
    frame.attrs.update({"sigma": sigma, "gamma0": gamma0, "gamma1": gamma1})
    return frame


def f_value(f_kind, x):
    return pd.DataFrame({"x": np.asarray(x, dtype=float)}).eval(F_KINDS[f_kind], engine="python").to_numpy()


def gen_population_sim2(config, rng):
    N = config.N
    cov = np.array([[4.0, 2.0 * config.rho], [2.0 * config.rho, 1.0]])
    d, x = rng.multivariate_normal(np.zeros(2), cov, size=N, method="cholesky").T
    signal = f_value(config.f_kind, x) + d + 0.2 * x * d
    sigma = noise_scale(signal, 0.8)
    y_c = 3.0 + signal + sigma * rng.standard_normal(N)
    y_b = (rng.uniform(size=N) < special.expit(-1.0 + signal)).astype(float)

    gamma0 = calibrate_intercept(-0.4 * d, config.n_R)
    gamma1 = calibrate_intercept(config.gamma2 * x, config.n_A)
    pi_R = special.expit(gamma0 - 0.4 * d)
    pi_A = special.expit(gamma1 + config.gamma2 * x)

    logger.info("Study 2 population: N=%d f=%s rho=%.2f gamma2=%.2f sigma=%.4f",
                N, config.f_kind, config.rho, config.gamma2, sigma)
    frame = pd.DataFrame({"x": x, "d": d, "y_c": y_c, "y_b": y_b, "pi_A": pi_A, "pi_R": pi_R})
    frame["y"] = frame["y_c"] if config.outcome == "continuous" else frame["y_b"]
    frame.attrs.update({"sigma": sigma, "gamma0": gamma0, "gamma1": gamma1})
    return frame


def generate_population(config, rng):
    return gen_population_sim1(config, rng) if config.study == 1 else gen_population_sim2(config, rng)


@dataclass(frozen=True)
class Scenario:
    """A cell of the misspecification grid

    In the labels the "QR" flag marks the outcome working model and the
    "PM" flag the propensity working model, so "QR-F/PM-T" drops the outcome
    recipe and keeps the propensity recipe.
    """

    qr_true: bool = True
    pm_true: bool = True

    @property
    def outcome_correct(self):
        return self.qr_true

    @property
    def propensity_correct(self):
        return self.pm_true

    @property
    def label(self):
        return f"QR-{'T' if self.qr_true else 'F'}/PM-{'T' if self.pm_true else 'F'}"

    @classmethod
    def parse(cls, label):
        """Accepts 'QR-T/PM-F' style labels or a {"qr_true", "pm_true"} mapping"""
        if isinstance(label, dict):
            return cls(bool(label.get("qr_true", True)), bool(label.get("pm_true", True)))
        try:
            qr, pm = label.upper().replace(" ", "").split("/")
            return cls(qr.split("-")[1].startswith("T"), pm.split("-")[1].startswith("T"))
        except (ValueError, IndexError, AttributeError):
            raise ConfigError(f"cannot parse scenario '{label}'; expected e.g. 'QR-T/PM-F'")


ALL_SCENARIOS = tuple(Scenario(qr, pm) for qr in (True, False) for pm in (True, False))


@dataclass(frozen=True)
class Recipes:
    """Column expressions for the propensity (qr) and outcome (pm) working models"""

    qr: tuple
    pm: tuple


def apply_misspecification(scenario, study, f_kind="LIN"):
    if study == 1:
        full = ("x1", "x2", "x3", "x4")
        reduced = ("x1", "x2", "x3")
        return Recipes(qr=full if scenario.propensity_correct else reduced,
                       pm=full if scenario.outcome_correct else reduced)
    if study == 2:
        if f_kind not in F_KINDS:
            raise ConfigError(f"unknown f_kind '{f_kind}'")
        qr = ("x",) if scenario.propensity_correct else ("x**2",)
        pm = (F_KINDS[f_kind], "d", "x*d") if scenario.outcome_correct else ("x**2", "d**2")
        return Recipes(qr=qr, pm=pm)
    raise ConfigError(f"unknown study {study}; expected 1 or 2")


def evaluate_recipe(frame, expressions):
    """Design matrix with one column per expression evaluated on ``frame``"""
    columns = []
    for expr in expressions:
        try:
            value = frame.eval(expr, engine="python")
        except Exception as exc:
            raise ConfigError(f"cannot evaluate covariate recipe '{expr}': {exc}") from exc
        columns.append(np.broadcast_to(np.asarray(value, dtype=float), (len(frame),)))
    return np.column_stack(columns)


def schema_for(study):
    if study == 1:
        return SampleSchema(x=("x1", "x2", "x3", "x4"), pi_R="pi_R")
    return SampleSchema(x=("x",), d=("d",))


def draw_samples(population, config, rng):
    """Independent Poisson samples; a unit drawn into both appears as two records

    Returns the pooled frame (S_A rows first, outcome blinded on S_R) and the
    hidden truth needed by the naive comparators.
    """
    N = len(population)
    picked_A = np.flatnonzero(rng.uniform(size=N) < population["pi_A"].to_numpy())
    picked_R = np.flatnonzero(rng.uniform(size=N) < population["pi_R"].to_numpy())
    covariates = list(schema_for(config.study).x) + list(schema_for(config.study).d)

    part_A = population.iloc[picked_A][covariates + ["y", "pi_R"]].copy()
    part_A["in_A"], part_A["in_R"], part_A["weight_R"] = 1, 0, np.nan
    part_R = population.iloc[picked_R][covariates + ["pi_R"]].copy()
    part_R["in_A"], part_R["in_R"], part_R["y"] = 0, 1, np.nan
    part_R["weight_R"] = 1.0 / part_R["pi_R"]
    frame = pd.concat([part_A, part_R], ignore_index=True)
    truth = {
        "y_A": population["y"].to_numpy()[picked_A],
        "pi_A": population["pi_A"].to_numpy()[picked_A],
        "y_R": population["y"].to_numpy()[picked_R],
        "w_R": 1.0 / population["pi_R"].to_numpy()[picked_R],
    }
    return frame, truth


def _naive_reports(truth, level):
    return {
        "UW_A": naive_mean(truth["y_A"], method="UW_A", level=level),
        "FW_A": naive_mean(truth["y_A"], weights=1.0 / truth["pi_A"], method="FW_A", level=level),
        "UW_R": naive_mean(truth["y_R"], method="UW_R", level=level),
        "FW_R": naive_mean(truth["y_R"], weights=truth["w_R"], method="FW_R", level=level),
    }


def _replication_seed(seed, k):
    return int(np.random.SeedSequence([seed, k]).generate_state(1)[0])


def run_replication(population, config, methods, scenarios, settings, k):
    """One replication k (1-based): sample once, run every method under every scenario"""
    rng = np.random.default_rng([config.seed, k])
    frame, truth = draw_samples(population, config, rng)
    sample = sample_from_frame(frame, schema_for(config.study), population_size=len(population))
    seed_k = _replication_seed(config.seed, k)
    naive = _naive_reports(truth, settings.level)
    f_kind = getattr(config, "f_kind", "LIN")

    rows = []
    cache = {}
    for scenario in scenarios:
        recipes = apply_misspecification(scenario, config.study, f_kind)
        qr_design = evaluate_recipe(frame, recipes.qr)
        pm_design = evaluate_recipe(frame, recipes.pm)
        for method in methods:
            row = {"k": k, "scenario": scenario.label, "method": method, "n_A": sample.n_A, "n_R": sample.n_R}
            # naive means ignore the working models; PAPP only sees the propensity recipe
            key = method if method in NAIVE_METHODS else (method, scenario.propensity_correct) if method == "PAPP" else None
            try:
                if key is not None and key in cache:
                    report = cache[key]
                elif method in NAIVE_METHODS:
                    report = naive[method]
                else:
                    report = estimate_method(method, sample, settings, qr_design, pm_design, seed=seed_k)
                if key is not None:
                    cache[key] = report
                row.update(point=report.point, lower=report.interval[0], upper=report.interval[1],
                           se=report.se, interval_kind=report.interval_kind, failed=False, error="")
            except (GpppError, np.linalg.LinAlgError) as exc:
                logger.warning("replication %d %s %s failed: %s", k, scenario.label, method, exc)
                row.update(point=np.nan, lower=np.nan, upper=np.nan, se=np.nan,
                           interval_kind="", failed=True, error=str(exc))
            rows.append(row)
    logger.info("replication %d done", k)
    return rows


def compute_metrics(replicates, truth_mean):
    """rBias, rMSE, crCI, rlCI, rSE and bias percentiles per (scenario, method)

    rlCI is the mean interval length on the outcome scale; failed rows
    are excluded and counted.
    """
    out = []
    keys = [c for c in ("scenario", "method") if c in replicates.columns]
    for labels, group in replicates.groupby(keys, sort=False):
        labels = labels if isinstance(labels, tuple) else (labels,)
        failed = group["failed"].astype(bool) if "failed" in group else pd.Series(False, index=group.index)
        ok = group[~failed]
        point = ok["point"].to_numpy(dtype=float)
        lower = ok["lower"].to_numpy(dtype=float)
        upper = ok["upper"].to_numpy(dtype=float)
        se = ok["se"].to_numpy(dtype=float)
        K = point.shape[0]
        err = (point - truth_mean) / truth_mean
        empirical_sd = float(np.std(point, ddof=1)) if K > 1 else math.nan
        row = dict(zip(keys, labels))
        row.update(
            K=K,
            failures=int(failed.sum()),
            rBias=100.0 * float(np.mean(err)) if K else math.nan,
            rMSE=100.0 * math.sqrt(float(np.mean(err ** 2))) if K else math.nan,
            crCI=100.0 * float(np.mean((lower <= truth_mean) & (truth_mean <= upper))) if K else math.nan,
            rlCI=float(np.mean(upper - lower)) if K else math.nan,
            rSE=float(np.mean(se)) / empirical_sd if empirical_sd and empirical_sd > 0 else math.nan,
            bias_q025=100.0 * float(np.quantile(err, 0.025)) if K else math.nan,
            bias_q975=100.0 * float(np.quantile(err, 0.975)) if K else math.nan,
        )
        out.append(row)
    return pd.DataFrame(out)


def normalize_methods(methods):
    names = [METHOD_ALIASES.get(m, m) for m in methods]
    valid = set(NAIVE_METHODS) | {"GPPP", "LWP", "PM", "AIPW", "PAPP"}
    unknown = [m for m in names if m not in valid]
    if unknown:
        raise ConfigError(f"unknown method(s) {unknown}; valid methods are {sorted(valid | set(METHOD_ALIASES))}")
    return tuple(dict.fromkeys(names))


def run_replications(config, methods, scenarios, settings, workers=1):
    """K replications in parallel; returns (metrics, replicate table, true mean)

    The population is drawn once from ``config.seed``; replication k uses
    streams derived from (seed, k) only, so results do not depend on the
    worker count.
    """
    methods = normalize_methods(methods)
    scenarios = tuple(s if isinstance(s, Scenario) else Scenario.parse(s) for s in scenarios)
    if not scenarios:
        raise ConfigError("scenario grid is empty")
    family = "bernoulli_logit" if getattr(config, "outcome", "continuous") == "binary" else "normal"
    if settings.family != family:
        logger.info("Using the %s outcome family for this study", family)
        settings = replace(settings, family=family)
    population = generate_population(config, np.random.default_rng(config.seed))
    truth_mean = float(population["y"].mean())
    logger.info("Running %d replications of study %d (%d methods x %d scenarios) on %d worker(s)",
                config.K, config.study, len(methods), len(scenarios), workers)

    batches = Parallel(n_jobs=workers)(
        delayed(run_replication)(population, config, methods, scenarios, settings, k)
        for k in range(1, config.K + 1))
    replicates = pd.DataFrame([row for rows in batches for row in rows])

    failures = int(replicates["failed"].sum())
    total = len(replicates)
    if failures > MAX_FAILURE_RATE * total:
        raise ReplicationError(f"{failures} of {total} method runs failed", failures, total)
    if failures:
        logger.warning("%d of %d method runs failed and were excluded", failures, total)
    metrics = compute_metrics(replicates, truth_mean)
    metrics.insert(0, "study", config.study)
    return metrics, replicates, truth_mean
