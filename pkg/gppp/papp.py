"""Two-step pseudo-inclusion probabilities (PAPP) for the non-probability sample.

The pooled membership logit gives the odds of S_A membership within S_C;
dividing by a log-link regression of the reference weights turns those
odds into population-level inclusion probabilities:

    pi_A(x) = exp{x'(phi - gamma)}

When the reference inclusion probability is known for every pooled unit
the weight regression is skipped and pi_A = pi_R * odds.
"""

import logging
from dataclasses import dataclass

import numpy as np

from gppp.errors import DegeneratePropensityError, DimensionError
from gppp.glm_core import GlmSpec, fit_glm
from gppp.report import EstimateReport

logger = logging.getLogger(__name__)

CLAMP_EPS = 1e-6


@dataclass(frozen=True, eq=False)
class PseudoInclusionFit:
    """Fitted coefficients and pseudo-inclusion probabilities over S_C

    ``gamma`` is empty when reference probabilities were known.
    ``log_pi`` is the unclamped linear predictor x'(phi - gamma), the GP
    input of the outcome model.
    """

    gamma: np.ndarray
    phi: np.ndarray
    pi_A: np.ndarray
    log_pi: np.ndarray
    clamped_count: int
    weight_dispersion: float = None
    converged: bool = True

    def pi_for(self, sample):
        return self.pi_A[sample.in_A]


def qr_design(sample, design=None):
    """Selection-model covariates for every pooled unit (intercept added by the GLM)"""
    if design is None:
        return sample.X
    design = np.asarray(design, dtype=float)
    if design.ndim == 1:
        design = design[:, None]
    if design.shape[0] != sample.n_C:
        raise DimensionError(f"QR design has {design.shape[0]} rows for {sample.n_C} pooled units")
    return design


def estimate_papp(sample, design=None, clamp_eps=CLAMP_EPS, odds_cap=None, ridge=1e-8,
                  use_known_pi_R=True):
    """Fit the membership and weight models and return pi_A over S_C

    ``odds_cap`` truncates the membership odds before dividing by the
    weight model (off by default).
    """
    X = qr_design(sample, design)
    membership_spec = GlmSpec("bernoulli_logit", ridge=ridge)
    membership = fit_glm(membership_spec, X, sample.in_A.astype(float))
    phi = membership.coefficients
    Z = np.column_stack([np.ones(sample.n_C), X])
    log_odds = Z @ phi

    if odds_cap is not None:
        log_odds = np.minimum(log_odds, np.log(odds_cap))

    converged = membership.converged
    weight_dispersion = None
    if use_known_pi_R and sample.pi_R is not None:
        gamma = np.empty(0)
        log_pi = np.log(sample.pi_R) + log_odds
    else:
        weight_spec = GlmSpec("gaussian_logmean", ridge=ridge)
        in_R = sample.in_R
        weights = fit_glm(weight_spec, X[in_R], sample.weight_R[in_R])
        gamma = weights.coefficients
        weight_dispersion = weights.dispersion
        converged = converged and weights.converged
        log_pi = log_odds - Z @ gamma

    raw = np.exp(log_pi)
    outside = (raw < clamp_eps) | (raw > 1.0)
    clamped_count = int(outside.sum())
    if clamped_count == raw.shape[0]:
        raise DegeneratePropensityError(
            f"all {clamped_count} pseudo-inclusion probabilities fell outside ({clamp_eps}, 1]")
    if clamped_count:
        logger.warning("Clamped %d of %d pseudo-inclusion probabilities into (%g, 1]",
                       clamped_count, raw.shape[0], clamp_eps)
    pi_A = np.clip(raw, clamp_eps, 1.0)

    return PseudoInclusionFit(gamma=gamma, phi=phi, pi_A=pi_A, log_pi=log_pi,
                              clamped_count=clamped_count, weight_dispersion=weight_dispersion,
                              converged=converged)


def hajek_mean(values, pi):
    """Σ y/π ÷ Σ 1/π"""
    inv = 1.0 / np.asarray(pi, dtype=float)
    return float(np.sum(np.asarray(values, dtype=float) * inv) / np.sum(inv))


def papp_point(sample, fit):
    return hajek_mean(sample.y_A, fit.pi_for(sample))


def papp_weighted_mean(sample, fit):
    """Hájek inverse-pseudo-weight mean of the observed S_A outcomes

    Variance and interval are left empty; the bootstrap in
    ``gppp.estimators`` fills them.
    """
    return EstimateReport(
        method="PAPP",
        point=papp_point(sample, fit),
        interval_kind="normal",
        metadata={"clamped_count": fit.clamped_count},
    )
