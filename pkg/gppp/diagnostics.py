"""Positivity and influence diagnostics for a fitted pseudo-inclusion model."""

import logging

import numpy as np

from gppp.gp_lowrank import KernelParams, kernel_smoother_weights, pooled_pseudo_weights
from gppp.papp import estimate_papp

logger = logging.getLogger(__name__)

OVERLAP_QUANTILES = (0.0, 0.01, 0.05, 0.25, 0.5, 0.75, 0.95, 0.99, 1.0)


def overlap_summary(log_pi, in_A, quantiles=OVERLAP_QUANTILES):
    """Quantiles of log π̂_A within each sample and their S_A - S_R gaps"""
    log_pi = np.asarray(log_pi, dtype=float)
    in_A = np.asarray(in_A, dtype=bool)
    q_A = np.quantile(log_pi[in_A], quantiles)
    q_R = np.quantile(log_pi[~in_A], quantiles)
    return {
        "quantiles": [float(q) for q in quantiles],
        "S_A": [float(v) for v in q_A],
        "S_R": [float(v) for v in q_R],
        "gap": [float(a - r) for a, r in zip(q_A, q_R)],
        "S_R_below_S_A_min": int(np.sum(log_pi[~in_A] < q_A[0])),
        "S_R_above_S_A_max": int(np.sum(log_pi[~in_A] > q_A[-1])),
    }


def tukey_outliers(values, k=1.5):
    """Boolean mask of values outside [Q1 - k·IQR, Q3 + k·IQR]"""
    values = np.asarray(values, dtype=float)
    q1, q3 = np.quantile(values, [0.25, 0.75])
    iqr = q3 - q1
    return (values < q1 - k * iqr) | (values > q3 + k * iqr)


def pseudo_weight_outliers(pi_A_sample, k=1.5):
    log_w = -np.log(np.asarray(pi_A_sample, dtype=float))
    mask = tukey_outliers(log_w, k)
    return {
        "rule": f"Tukey {k}*IQR on log pseudo-weights",
        "count": int(mask.sum()),
        "n": int(mask.shape[0]),
        "indices": np.flatnonzero(mask).tolist(),
        "max_weight": float(np.exp(log_w.max())),
        "weight_ratio_max_min": float(np.exp(log_w.max() - log_w.min())),
    }


def smoother_summary(u_R, u_A, w_R, params=None):
    """Row sums, effective matches and pooled pseudo-weights of the kernel smoother

    Rows are S_R units, columns S_A units.
    """
    params = params or KernelParams()
    smoother = kernel_smoother_weights(u_R, u_A, params)
    row_sums = smoother.sum(axis=1)
    effective = 1.0 / np.sum(smoother ** 2, axis=1)
    pooled = pooled_pseudo_weights(smoother, w_R)
    return {
        "kernel": {"alpha": params.alpha, "rho": params.rho, "tau": params.tau},
        "row_sum_min": float(row_sums.min()),
        "row_sum_max": float(row_sums.max()),
        "effective_matches": {
            "min": float(effective.min()),
            "median": float(np.median(effective)),
            "max": float(effective.max()),
        },
        "pooled_pseudo_weights": {
            "total": float(pooled.sum()),
            "min": float(pooled.min()),
            "median": float(np.median(pooled)),
            "max": float(pooled.max()),
            "outliers": int(tukey_outliers(np.log(np.maximum(pooled, 1e-300))).sum()),
        },
    }


def diagnose(sample, qr_design=None, use_known_pi_R=True, kernel=None, tukey_k=1.5):
    """Full diagnostic bundle for the diagnose command"""
    fit = estimate_papp(sample, qr_design, use_known_pi_R=use_known_pi_R)
    log_pi = np.log(fit.pi_A)
    in_A = sample.in_A
    bundle = {
        "n_A": sample.n_A,
        "n_R": sample.n_R,
        "clamped_count": fit.clamped_count,
        "overlap": overlap_summary(log_pi, in_A),
        "pseudo_weights": pseudo_weight_outliers(fit.pi_A[in_A], tukey_k),
        "smoother": smoother_summary(log_pi[~in_A], log_pi[in_A], sample.w_R, kernel),
    }
    logger.info("Diagnostics: %d pseudo-weight outlier(s), overlap gap at median %.3f",
                bundle["pseudo_weights"]["count"], bundle["overlap"]["gap"][4])
    return bundle
