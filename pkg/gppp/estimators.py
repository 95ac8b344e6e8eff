"""Population-mean estimators built on the pooled sample.

GPPP / LWP / PM : posterior draws of the doubly robust prediction mean
AIPW           : augmented inverse pseudo-weighting with bootstrap variance
PAPP           : Hájek mean under the pseudo-inclusion probabilities
UW / FW        : naive unweighted and fully weighted means (comparators)
"""

import logging
import math
from dataclasses import replace

import numpy as np
from joblib import Parallel, delayed

from gppp.bayes_core import HmcConfig
from gppp.data_model import derive_post_strata
from gppp.errors import BootstrapFailureError, ConfigError, DrawMismatchError, GpppError
from gppp.fpbb import draw_polya, expand_predictions
from gppp.glm_core import GlmSpec, fit_glm, predict_glm
from gppp.joint_model import assemble_model, sample_posterior
from gppp.papp import estimate_papp, hajek_mean, papp_point
from gppp.report import (  # noqa: F401  (re-exported)
    EstimateReport,
    bootstrap_report,
    hpd_interval,
    normal_interval,
    percentile_interval,
    posterior_report,
)

logger = logging.getLogger(__name__)

METHODS = ("GPPP", "LWP", "PM", "AIPW", "PAPP", "UW", "FW")
AUGMENTATION_OF = {"GPPP": "gp", "LWP": "lwp", "PM": "none"}
GLM_FAMILY_OF = {"normal": "gaussian_identity", "bernoulli_logit": "bernoulli_logit",
                 "negbinom_log_offset": "negbinom_log"}
MAX_BOOTSTRAP_FAILURE_RATE = 0.10


def gppp_draws(y_A, y_hat_A, y_hat_U, N):
    """ȳ^(m) = (Σ_A (y_i - ŷ_i^(m)) + ŷ_U^(m)) / N"""
    y_hat_A = np.atleast_2d(y_hat_A)
    y_hat_U = np.asarray(y_hat_U, dtype=float)
    if y_hat_A.shape[0] != y_hat_U.shape[0]:
        raise DrawMismatchError(f"{y_hat_A.shape[0]} S_A prediction draws vs {y_hat_U.shape[0]} population draws")
    correction = np.sum(np.asarray(y_A, dtype=float)[None, :] - y_hat_A, axis=1)
    return (correction + y_hat_U) / N


def difference_form_draws(y_A, y_hat_A, y_rep_R, polya, strata):
    """Generalized-difference form: predicted mean over U plus the S_A residual mean

    Per draw, Σ_j (N_j / N) ȳ̂_j with ȳ̂_j the stratum mean of the S_R
    predictions, then (Σ_A y - Σ_A ŷ) / N added on.
    """
    y_rep_R = np.atleast_2d(y_rep_R)
    y_hat_A = np.atleast_2d(y_hat_A)
    if not (y_rep_R.shape[0] == y_hat_A.shape[0] == polya.M):
        raise DrawMismatchError("predictive and Polya draw counts disagree")
    counts = np.bincount(strata.labels, minlength=strata.J)
    out = np.empty(polya.M)
    for m in range(polya.M):
        stratum_means = np.bincount(strata.labels, weights=y_rep_R[m], minlength=strata.J) / counts
        predicted = np.dot(polya.N_draws[m] / polya.N, stratum_means)
        residual = (np.sum(y_A) - np.sum(y_hat_A[m])) / polya.N
        out[m] = predicted + residual
    return out


def estimate_gppp(sample, posterior, polya, strata, level=0.95, method="GPPP", metadata=None):
    """Combine predictive draws with the Polya population expansion"""
    if posterior.M != polya.M:
        raise DrawMismatchError(f"joint posterior has {posterior.M} draws, Polya posterior {polya.M}")
    y_hat_U = expand_predictions(polya, strata, posterior.y_rep_R)
    draws = gppp_draws(sample.y_A, posterior.y_rep_A, y_hat_U, sample.N)
    info = {"draws": int(posterior.M), "strata": int(strata.J)}
    info.update(metadata or {})
    return posterior_report(method, draws, level, info)


def run_bayesian_estimator(sample, method="GPPP", family="normal", hmc_config=None, basis_size=10,
                           boundary_factor=1.25, pm_design=None, qr_design=None, priors=None,
                           polya_alpha=None, conjugacy="shifted", weight_tolerance=0.0,
                           use_known_pi_R=True, workers=1, level=0.95):
    """Fit the joint model, draw the Polya posterior and return (report, posterior)"""
    hmc_config = hmc_config or HmcConfig()
    model = assemble_model(sample, family=family, basis_size=basis_size, boundary_factor=boundary_factor,
                           priors=priors, augmentation=AUGMENTATION_OF[method], pm_design=pm_design,
                           qr_design=qr_design, use_known_pi_R=use_known_pi_R)
    posterior = sample_posterior(model, hmc_config, workers=workers)
    strata = derive_post_strata(sample, weight_tolerance)
    rng = np.random.default_rng([hmc_config.seed, hmc_config.chains + 1])
    polya = draw_polya(strata, sample.N, posterior.M, alpha=polya_alpha, rng=rng, conjugacy=conjugacy)
    metadata = {
        "family": model.family.kind,
        "augmentation": model.augmentation,
        "seed": hmc_config.seed,
        "divergences": int(sum(posterior.diagnostics["divergences"])),
        "max_split_rhat": posterior.diagnostics["max_split_rhat"],
    }
    report = estimate_gppp(sample, posterior, polya, strata, level, method=method, metadata=metadata)
    logger.info("%s estimate %.6g (%.6g, %.6g)", method, report.point, *report.interval)
    return report, posterior


def estimate_lwp(sample, **kwargs):
    kwargs["method"] = "LWP"
    return run_bayesian_estimator(sample, **kwargs)


def _slice_design(design, index):
    return None if design is None else np.asarray(design, dtype=float)[index]


def _default_pm(sample):
    return np.column_stack([sample.X, sample.D]) if sample.D.shape[1] else sample.X


def aipw_point(sample, qr_design=None, pm_design=None, family="normal", use_known_pi_R=True):
    """Σ_A (y - m̂)/π̂ ÷ Σ_A 1/π̂  +  Σ_R w m̂ ÷ Σ_R w"""
    fit = estimate_papp(sample, qr_design, use_known_pi_R=use_known_pi_R)
    pm = _default_pm(sample) if pm_design is None else np.asarray(pm_design, dtype=float)
    spec = GlmSpec(GLM_FAMILY_OF[family])
    in_A, in_R = sample.in_A, sample.in_R
    offset = sample.offset
    outcome = fit_glm(spec, pm[in_A], sample.y_A, exposure=None if offset is None else offset[in_A])
    m_hat = predict_glm(outcome, spec, pm, exposure=offset)
    pi_A = fit.pi_for(sample)
    residual_arm = hajek_mean(sample.y_A - m_hat[in_A], pi_A)
    w = sample.w_R
    prediction_arm = float(np.sum(w * m_hat[in_R]) / np.sum(w))
    return residual_arm + prediction_arm


def _bootstrap_indices(sample, rng):
    idx_A = np.flatnonzero(sample.in_A)
    idx_R = np.flatnonzero(sample.in_R)
    return np.concatenate([rng.choice(idx_A, idx_A.shape[0], replace=True),
                           rng.choice(idx_R, idx_R.shape[0], replace=True)])


def _one_replicate(point_fn, sample, designs, seed, b):
    rng = np.random.default_rng([seed, b])
    index = _bootstrap_indices(sample, rng)
    try:
        resampled = {key: _slice_design(value, index) for key, value in designs.items()}
        return point_fn(sample.subset(index), **resampled)
    except (GpppError, np.linalg.LinAlgError, FloatingPointError) as exc:
        logger.debug("bootstrap replicate %d failed: %s", b, exc)
        return math.nan


def bootstrap_replicates(point_fn, sample, designs, B=100, seed=0, workers=1):
    """Resample S_A and S_R independently with replacement and refit ``point_fn``

    ``designs`` maps keyword names to row-aligned matrices sliced with the
    sample; more than 10% failed replicates raise BootstrapFailureError.
    """
    if B < 2:
        raise ValueError("bootstrap needs B >= 2 replicates")
    values = Parallel(n_jobs=workers)(
        delayed(_one_replicate)(point_fn, sample, designs, seed, b) for b in range(B))
    values = np.asarray(values, dtype=float)
    failures = int(np.isnan(values).sum())
    if failures > MAX_BOOTSTRAP_FAILURE_RATE * B:
        raise BootstrapFailureError(f"{failures} of {B} bootstrap replicates failed", failures, B)
    if failures:
        logger.warning("%d of %d bootstrap replicates failed and were dropped", failures, B)
    return values[~np.isnan(values)], failures


def estimate_aipw(sample, qr_design=None, pm_design=None, B=100, seed=0, family="normal",
                  use_known_pi_R=True, workers=1, level=0.95):
    def point_fn(sub, qr_design=None, pm_design=None):
        return aipw_point(sub, qr_design, pm_design, family, use_known_pi_R)

    point = point_fn(sample, qr_design, pm_design)
    designs = {"qr_design": qr_design, "pm_design": pm_design}
    replicates, failures = bootstrap_replicates(point_fn, sample, designs, B, seed, workers)
    report = bootstrap_report("AIPW", point, replicates, level,
                              {"B": B, "failures": failures, "seed": seed, "family": family})
    logger.info("AIPW estimate %.6g (%.6g, %.6g)", report.point, *report.interval)
    return report


def estimate_papp_mean(sample, qr_design=None, B=100, seed=0, use_known_pi_R=True, workers=1, level=0.95):
    def point_fn(sub, qr_design=None):
        return papp_point(sub, estimate_papp(sub, qr_design, use_known_pi_R=use_known_pi_R))

    fit = estimate_papp(sample, qr_design, use_known_pi_R=use_known_pi_R)
    point = papp_point(sample, fit)
    replicates, failures = bootstrap_replicates(point_fn, sample, {"qr_design": qr_design}, B, seed, workers)
    return bootstrap_report("PAPP", point, replicates, level,
                            {"B": B, "failures": failures, "seed": seed, "clamped_count": fit.clamped_count})


def naive_mean(values, weights=None, method="UW", level=0.95):
    """Unweighted (s²/n) or Hájek-weighted mean with a linearized variance"""
    y = np.asarray(values, dtype=float)
    if weights is None:
        point = float(np.mean(y))
        variance = float(np.var(y, ddof=1) / y.shape[0])
    else:
        w = np.asarray(weights, dtype=float)
        point = float(np.sum(w * y) / np.sum(w))
        variance = float(np.sum(w ** 2 * (y - point) ** 2) / np.sum(w) ** 2)
    return EstimateReport(method=method, point=point, interval=normal_interval(point, variance, level),
                          variance=variance, level=level, interval_kind="normal",
                          metadata={"n": int(y.shape[0])})


def estimate_method(method, sample, settings, qr_design=None, pm_design=None, seed=0, workers=1):
    """Run one named estimator with the shared estimation settings

    Bayesian methods attach their sampler diagnostics under
    ``metadata["sampler"]``.
    """
    if method in AUGMENTATION_OF:
        hmc = replace(settings.hmc, seed=seed)
        report, posterior = run_bayesian_estimator(
            sample, method=method, family=settings.family, hmc_config=hmc,
            basis_size=settings.basis_size, boundary_factor=settings.boundary_factor,
            pm_design=pm_design, qr_design=qr_design, priors=settings.priors,
            polya_alpha=settings.polya_alpha, conjugacy=settings.conjugacy,
            weight_tolerance=settings.weight_tolerance, use_known_pi_R=settings.use_known_pi_R,
            workers=workers, level=settings.level)
        report.metadata["sampler"] = posterior.diagnostics
        return report
    if method == "AIPW":
        return estimate_aipw(sample, qr_design, pm_design, B=settings.bootstrap_B, seed=seed,
                             family=settings.family, use_known_pi_R=settings.use_known_pi_R,
                             workers=workers, level=settings.level)
    if method == "PAPP":
        return estimate_papp_mean(sample, qr_design, B=settings.bootstrap_B, seed=seed,
                                  use_known_pi_R=settings.use_known_pi_R, workers=workers,
                                  level=settings.level)
    if method == "UW":
        return naive_mean(sample.y_A, method="UW", level=settings.level)
    raise ConfigError(f"method '{method}' cannot be run on observed data; expected one of "
                      f"{', '.join(m for m in METHODS if m != 'FW')}")