"""Frequentist GLM fitting by iteratively reweighted least squares.

Used by the two-step pseudo-inclusion estimator (membership logit and the
log-mean reference-weight regression) and by the AIPW outcome regressions.
"""

import logging
from dataclasses import dataclass

import numpy as np
from scipy import optimize, special

from gppp.errors import ConfigError, DimensionError, SingularDesignError

logger = logging.getLogger(__name__)

FAMILIES = ("bernoulli_logit", "gaussian_identity", "gaussian_logmean", "negbinom_log")

MAX_HALVINGS = 10


@dataclass(frozen=True)
class GlmSpec:
    family: str
    include_intercept: bool = True
    max_iter: int = 100
    tol: float = 1e-8
    ridge: float = 1e-8

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ConfigError(f"unknown GLM family '{self.family}'; expected one of {FAMILIES}")
        if self.max_iter < 1:
            raise ConfigError("max_iter must be positive")
        if not self.tol > 0:
            raise ConfigError("tol must be positive")
        if self.ridge < 0:
            raise ConfigError("ridge must be nonnegative")


@dataclass(frozen=True, eq=False)
class GlmFit:
    """Fitted coefficients (intercept first when GlmSpec asks for one)

    ``dispersion`` is the residual variance for the Gaussian families and
    the reciprocal size 1/r for the negative binomial.
    """

    coefficients: np.ndarray
    converged: bool
    iterations: int
    log_likelihood: float
    dispersion: float = None


def model_matrix(spec, design):
    design = np.asarray(design, dtype=float)
    if design.ndim == 1:
        design = design[:, None]
    if spec.include_intercept:
        design = np.column_stack([np.ones(design.shape[0]), design])
    return design


def _log_exposure(exposure, n):
    if exposure is None:
        return np.zeros(n)
    exposure = np.asarray(exposure, dtype=float)
    if exposure.shape != (n,):
        raise DimensionError(f"exposure has shape {exposure.shape}, expected ({n},)")
    return np.log(exposure)


def _unit_terms(family, eta, y, size=None):
    """Per-unit log-likelihood, dℓ/dη and curvature -d²ℓ/dη² (or its Fisher stand-in)"""
    if family == "bernoulli_logit":
        p = special.expit(eta)
        loglik = y * eta - np.logaddexp(0.0, eta)
        return loglik, y - p, p * (1.0 - p)
    if family == "gaussian_identity":
        resid = y - eta
        return -0.5 * resid ** 2, resid, np.ones_like(eta)
    if family == "gaussian_logmean":
        mu = np.exp(eta)
        resid = y - mu
        return -0.5 * resid ** 2, resid * mu, mu * (2.0 * mu - y)
    # negbinom_log, size r
    mu = np.exp(eta)
    r = size
    loglik = (special.gammaln(y + r) - special.gammaln(r) - special.gammaln(y + 1.0)
              + r * np.log(r / (r + mu)) + y * np.log(mu / (r + mu)))
    score = r * (y - mu) / (r + mu)
    curvature = r * mu * (r + y) / (r + mu) ** 2
    return loglik, score, curvature


def _objective(spec, beta, Z, y, w, log_t, size):
    eta = Z @ beta + log_t
    loglik, _, _ = _unit_terms(spec.family, eta, y, size)
    return np.sum(w * loglik) / w.sum() - 0.5 * spec.ridge * beta @ beta


def glm_score(spec, coefficients, design, response, case_weights=None, exposure=None, size=None):
    """Gradient of the mean penalized log-likelihood at ``coefficients``"""
    Z = model_matrix(spec, design)
    y = np.asarray(response, dtype=float)
    w = np.ones_like(y) if case_weights is None else np.asarray(case_weights, dtype=float)
    eta = Z @ coefficients + _log_exposure(exposure, y.shape[0])
    _, d_eta, _ = _unit_terms(spec.family, eta, y, size)
    return Z.T @ (w * d_eta) / w.sum() - spec.ridge * coefficients


def _initial_coefficients(spec, Z, y, w, log_t):
    k = Z.shape[1]
    beta = np.zeros(k)
    if spec.family == "gaussian_identity":
        return beta
    if spec.family == "gaussian_logmean":
        target = np.log(np.maximum(y, 1e-8 * max(np.max(np.abs(y)), 1.0))) - log_t
        sw = np.sqrt(w)
        beta, *_ = np.linalg.lstsq(Z * sw[:, None], target * sw, rcond=None)
        return beta
    if spec.include_intercept:
        mean_y = np.sum(w * y) / w.sum()
        if spec.family == "bernoulli_logit":
            beta[0] = special.logit(np.clip(mean_y, 1e-6, 1 - 1e-6))
        else:
            rate = np.sum(w * y) / np.sum(w * np.exp(log_t))
            beta[0] = np.log(max(rate, 1e-8))
    return beta


def _newton(spec, beta, Z, y, w, log_t, size):
    """Damped Newton/IRLS iterations for fixed dispersion"""
    W = w.sum()
    k = Z.shape[1]
    obj = _objective(spec, beta, Z, y, w, log_t, size)
    for iteration in range(1, spec.max_iter + 1):
        eta = Z @ beta + log_t
        _, d_eta, curvature = _unit_terms(spec.family, eta, y, size)
        score = Z.T @ (w * d_eta) / W - spec.ridge * beta
        if np.max(np.abs(score)) <= spec.tol:
            return beta, True, iteration - 1

        info = (Z * (w * curvature)[:, None]).T @ Z / W + spec.ridge * np.eye(k)
        try:
            chol = np.linalg.cholesky(info)
        except np.linalg.LinAlgError:
            if spec.family != "gaussian_logmean":
                raise SingularDesignError("information matrix is not positive definite")
            # Observed curvature can go negative far from the optimum; use the Gauss-Newton weights
            mu = np.exp(eta)
            info = (Z * (w * mu ** 2)[:, None]).T @ Z / W + spec.ridge * np.eye(k)
            try:
                chol = np.linalg.cholesky(info)
            except np.linalg.LinAlgError as exc:
                raise SingularDesignError("Gauss-Newton matrix is singular") from exc
        step = np.linalg.solve(chol.T, np.linalg.solve(chol, score))

        # Step-halving on likelihood decrease
        t = 1.0
        for _ in range(MAX_HALVINGS + 1):
            candidate = beta + t * step
            cand_obj = _objective(spec, candidate, Z, y, w, log_t, size)
            if np.isfinite(cand_obj) and cand_obj >= obj - 1e-12 * (1.0 + abs(obj)):
                break
            t *= 0.5
        else:
            logger.debug("IRLS %s: no ascent after %d halvings at iteration %d", spec.family, MAX_HALVINGS, iteration)
            return beta, bool(np.max(np.abs(score)) <= spec.tol), iteration

        beta, obj = candidate, cand_obj
        logger.debug("IRLS %s iteration %d: objective %.10g, step scale %g", spec.family, iteration, obj, t)

    eta = Z @ beta + log_t
    _, d_eta, _ = _unit_terms(spec.family, eta, y, size)
    score = Z.T @ (w * d_eta) / W - spec.ridge * beta
    return beta, bool(np.max(np.abs(score)) <= spec.tol), spec.max_iter


def _nb_profile_size(beta, Z, y, w, log_t):
    mu = np.exp(Z @ beta + log_t)

    def negative_loglik(log_r):
        r = np.exp(log_r)
        loglik, _, _ = _unit_terms("negbinom_log", np.log(mu), y, r)
        return -np.sum(w * loglik)

    result = optimize.minimize_scalar(negative_loglik, bounds=(-10.0, 15.0), method="bounded",
                                      options={"xatol": 1e-10})
    return float(np.exp(result.x))


def fit_glm(spec, design, response, case_weights=None, exposure=None):
    """Maximum (ridge-penalized) likelihood fit by IRLS

    Non-convergence is reported through ``GlmFit.converged``; a rank
    deficient design without ridge raises SingularDesignError.
    """
    Z = model_matrix(spec, design)
    y = np.asarray(response, dtype=float)
    n, k = Z.shape
    if y.shape != (n,):
        raise DimensionError(f"design has {n} rows but response has shape {y.shape}")
    w = np.ones(n) if case_weights is None else np.asarray(case_weights, dtype=float)
    if w.shape != (n,):
        raise DimensionError("case_weights length does not match the design")
    if not (np.isfinite(Z).all() and np.isfinite(y).all() and np.isfinite(w).all()):
        raise DimensionError("design, response and case weights must be finite")
    log_t = _log_exposure(exposure, n)

    if spec.ridge == 0 and np.linalg.matrix_rank(Z * np.sqrt(w)[:, None]) < k:
        raise SingularDesignError(f"design of rank < {k} with ridge=0")

    beta = _initial_coefficients(spec, Z, y, w, log_t)
    size = None
    if spec.family == "negbinom_log":
        size = 1.0
        iterations = 0
        converged = False
        for _ in range(50):
            beta, converged, used = _newton(spec, beta, Z, y, w, log_t, size)
            iterations += used
            new_size = _nb_profile_size(beta, Z, y, w, log_t)
            stable = abs(np.log(new_size) - np.log(size)) < 1e-8
            size = new_size
            if stable:
                break
        beta, converged, used = _newton(spec, beta, Z, y, w, log_t, size)
        iterations += used
    else:
        beta, converged, iterations = _newton(spec, beta, Z, y, w, log_t, size)

    eta = Z @ beta + log_t
    dispersion = None
    if spec.family in ("gaussian_identity", "gaussian_logmean"):
        mean = eta if spec.family == "gaussian_identity" else np.exp(eta)
        rss = np.sum(w * (y - mean) ** 2)
        dof = w.sum() - k
        dispersion = float(rss / dof) if dof > 0 else float(rss / w.sum())
        sigma2 = max(rss / w.sum(), np.finfo(float).tiny)
        log_likelihood = float(-0.5 * w.sum() * (np.log(2 * np.pi * sigma2) + 1.0))
    else:
        loglik, _, _ = _unit_terms(spec.family, eta, y, size)
        log_likelihood = float(np.sum(w * loglik))
        if size is not None:
            dispersion = 1.0 / size

    if not converged:
        logger.warning("GLM %s did not converge after %d iterations", spec.family, iterations)
    return GlmFit(coefficients=beta, converged=converged, iterations=iterations,
                  log_likelihood=log_likelihood, dispersion=dispersion)


def predict_glm(fit, spec, design, exposure=None):
    """Mean-scale predictions (inverse link applied)"""
    Z = model_matrix(spec, design)
    if Z.shape[1] != fit.coefficients.shape[0]:
        raise DimensionError(
            f"design gives {Z.shape[1]} columns but the fit has {fit.coefficients.shape[0]} coefficients")
    eta = Z @ fit.coefficients + _log_exposure(exposure, Z.shape[0])
    if spec.family == "bernoulli_logit":
        return special.expit(eta)
    if spec.family == "gaussian_identity":
        return eta
    return np.exp(eta)
