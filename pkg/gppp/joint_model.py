"""Joint Bayesian model: reference-weight regression, pooled membership
logit and a partially linear outcome model whose nonlinear part is a
function of the log pseudo-inclusion probability.

    w_R / w̄ ~ N(exp(z'γ), λ²)                        on S_R
    δ_A      ~ Bernoulli(expit(z'φ))                  on S_C
    u        = z'(φ - γ) - log w̄                      (or log π_R + z'φ)
    y_A      ~ family(θ0 + x'θ + g(u))                on S_A

g is a reduced-rank Matérn-3/2 + polynomial GP (``gp``), θ*/π (``lwp``)
or absent (``none``). Covariates are standardized over S_C and, for the
normal family, so is the outcome; summaries are back-transformed.
"""

import logging
from dataclasses import dataclass, field

import numpy as np
import pandas as pd
from scipy import special

from gppp.bayes_core import HmcConfig, default_priors, log_density_and_grad, run_hmc
from gppp.errors import ConfigError, DimensionError, ValidationError
from gppp.glm_core import GlmSpec, fit_glm
from gppp.gp_lowrank import build_basis, poly_features, poly_features_derivative

logger = logging.getLogger(__name__)

OUTCOME_FAMILIES = ("normal", "bernoulli_logit", "negbinom_log_offset")
AUGMENTATIONS = ("gp", "lwp", "none")


@dataclass(frozen=True)
class OutcomeFamily:
    kind: str = "normal"

    def __post_init__(self):
        if self.kind not in OUTCOME_FAMILIES:
            raise ConfigError(f"unknown outcome family '{self.kind}'; expected one of {OUTCOME_FAMILIES}")

    @property
    def needs_offset(self):
        return self.kind == "negbinom_log_offset"

    @property
    def dispersion_block(self):
        return {"normal": "log_sigma", "negbinom_log_offset": "log_nb_sigma"}.get(self.kind)


class ParameterLayout:
    """Named contiguous slices of the unconstrained parameter vector"""

    def __init__(self, blocks):
        self.slices = {}
        start = 0
        for name, size in blocks:
            if size > 0:
                self.slices[name] = slice(start, start + size)
                start += size
        self.dim = start

    def __contains__(self, name):
        return name in self.slices

    def unpack(self, q):
        return {name: q[s] for name, s in self.slices.items()}

    def names(self):
        out = []
        for name, s in self.slices.items():
            size = s.stop - s.start
            out.extend([name] if size == 1 else [f"{name}[{i}]" for i in range(size)])
        return tuple(out)


def _standardize(matrix):
    matrix = np.asarray(matrix, dtype=float)
    center = matrix.mean(axis=0)
    scale = matrix.std(axis=0)
    scale = np.where(scale > 0, scale, 1.0)
    return (matrix - center) / scale, center, scale


def _with_intercept(matrix):
    return np.column_stack([np.ones(matrix.shape[0]), matrix])


def _natural_coefficients(draws, center, scale, shift=0.0, multiplier=1.0):
    """Undo column standardization; ``draws`` columns are [intercept, slopes...]"""
    slopes = draws[:, 1:] / scale[None, :]
    intercept = draws[:, 0] - slopes @ center
    return np.column_stack([intercept * multiplier + shift, slopes * multiplier])


@dataclass(eq=False)
class JointModel:
    family: OutcomeFamily
    augmentation: str
    layout: ParameterLayout
    Z: np.ndarray
    in_A: np.ndarray
    in_R: np.ndarray
    X_pm: np.ndarray
    y_A: np.ndarray
    log_offset: np.ndarray
    w_tilde: np.ndarray
    log_w_bar: float
    log_pi_R: np.ndarray
    qr_center: np.ndarray
    qr_scale: np.ndarray
    pm_center: np.ndarray
    pm_scale: np.ndarray
    y_center: float
    y_scale: float
    qr_names: tuple
    pm_names: tuple
    priors: dict
    basis: object = None
    tau: float = 1.0
    lwp_scale: float = 1.0
    init: np.ndarray = None
    u_init: np.ndarray = None
    metadata: dict = field(default_factory=dict)

    @property
    def dim(self):
        return self.layout.dim

    @property
    def parameter_names(self):
        return self.layout.names()

    @property
    def known_pi_R(self):
        return self.log_pi_R is not None

    def initial_point(self):
        return self.init.copy()

    def gp_input(self, P):
        """u over S_C for one parameter state"""
        if self.known_pi_R:
            return self.log_pi_R + self.Z @ P["phi"]
        return self.Z @ (P["phi"] - P["gamma"]) - self.log_w_bar

    def augmentation_terms(self, P, u):
        """g(u), g'(u) and the pieces needed for the augmentation gradients"""
        if self.augmentation == "none":
            zeros = np.zeros_like(u)
            return zeros, zeros, None
        if self.augmentation == "lwp":
            feature = np.exp(-u) / self.lwp_scale
            g = P["theta_star"][0] * feature
            return g, -g, feature
        alpha = np.exp(P["log_alpha"][0])
        rho = np.exp(P["log_rho"][0])
        scales = self.basis.spectral_scales(alpha, rho)
        Phi = self.basis.features(u)
        Psi = poly_features(u, self.tau)
        weighted = scales * P["beta"]
        f_matern = Phi @ weighted
        g = f_matern + Psi @ P["eta_poly"]
        dg = self.basis.feature_derivatives(u) @ weighted + poly_features_derivative(u, self.tau) @ P["eta_poly"]
        return g, dg, (Phi, Psi, scales, weighted, f_matern, rho)

    def linear_predictor(self, P, u, mask):
        g, _, _ = self.augmentation_terms(P, u[mask])
        return P["theta0"][0] + self.X_pm[mask] @ P["theta"] + g + self.log_offset[mask]

    def _outcome_terms(self, P, eta):
        """Outcome log-likelihood, dℓ/dη and dℓ/d(dispersion block)"""
        y = self.y_A
        kind = self.family.kind
        if kind == "normal":
            log_sigma = P["log_sigma"][0]
            sigma2 = np.exp(2.0 * log_sigma)
            resid = y - eta
            loglik = -y.shape[0] * log_sigma - 0.5 * np.sum(resid ** 2) / sigma2
            return loglik, resid / sigma2, -y.shape[0] + np.sum(resid ** 2) / sigma2
        if kind == "bernoulli_logit":
            loglik = np.sum(y * eta - np.logaddexp(0.0, eta))
            return loglik, y - special.expit(eta), 0.0
        r = np.exp(-P["log_nb_sigma"][0])
        mu = np.exp(eta)
        loglik = np.sum(special.gammaln(y + r) - special.gammaln(r) - special.gammaln(y + 1.0)
                        + r * (np.log(r) - np.logaddexp(np.log(r), eta))
                        + y * (eta - np.logaddexp(np.log(r), eta)))
        d_eta = r * (y - mu) / (r + mu)
        d_r = np.sum(special.digamma(y + r) - special.digamma(r) + np.log(r / (r + mu))
                     + 1.0 - (r + y) / (r + mu))
        # r = exp(-log σ)
        return loglik, d_eta, -r * d_r

    def log_density_and_grad(self, q):
        P = self.layout.unpack(q)
        grad = np.zeros_like(q)
        G = self.layout.unpack(grad)
        priors = self.priors
        lp = 0.0

        for name in ("phi", "gamma", "theta0", "theta", "theta_star"):
            if name in self.layout:
                value, g = priors["coefficients"].logpdf(P[name])
                lp += value
                G[name] += g

        # membership model over S_C
        eta_m = self.Z @ P["phi"]
        delta = self.in_A.astype(float)
        lp += np.sum(delta * eta_m - np.logaddexp(0.0, eta_m))
        G["phi"] += self.Z.T @ (delta - special.expit(eta_m))

        # reference-weight model over S_R
        if not self.known_pi_R:
            Z_R = self.Z[self.in_R]
            log_lambda = P["log_lambda"][0]
            lam2 = np.exp(2.0 * log_lambda)
            mu_w = np.exp(Z_R @ P["gamma"])
            resid = self.w_tilde - mu_w
            lp += -resid.shape[0] * log_lambda - 0.5 * np.sum(resid ** 2) / lam2
            G["gamma"] += Z_R.T @ (resid * mu_w) / lam2
            G["log_lambda"] += -resid.shape[0] + np.sum(resid ** 2) / lam2
            value, g = priors["scale"].logpdf_log_scale(P["log_lambda"])
            lp += value
            G["log_lambda"] += g

        # outcome model over S_A
        u_A = self.gp_input(P)[self.in_A]
        g_A, dg_A, pieces = self.augmentation_terms(P, u_A)
        eta = P["theta0"][0] + self.X_pm[self.in_A] @ P["theta"] + g_A + self.log_offset[self.in_A]
        value, d_eta, d_disp = self._outcome_terms(P, eta)
        lp += value
        G["theta0"] += np.sum(d_eta)
        G["theta"] += self.X_pm[self.in_A].T @ d_eta

        block = self.family.dispersion_block
        if block is not None:
            G[block] += d_disp
            prior = priors["scale"] if block == "log_sigma" else priors["nb_sigma"]
            value, g = prior.logpdf_log_scale(P[block])
            lp += value
            G[block] += g

        chain = self.Z[self.in_A].T @ (d_eta * dg_A)
        G["phi"] += chain
        if not self.known_pi_R:
            G["gamma"] -= chain

        if self.augmentation == "lwp":
            G["theta_star"] += d_eta @ pieces
        elif self.augmentation == "gp":
            Phi, Psi, scales, weighted, f_matern, rho = pieces
            G["beta"] += scales * (Phi.T @ d_eta)
            G["eta_poly"] += Psi.T @ d_eta
            G["log_alpha"] += d_eta @ f_matern
            G["log_rho"] += d_eta @ (Phi @ (weighted * self.basis.log_scale_rho_derivative(rho)))
            for name in ("beta", "eta_poly"):
                value, g = priors["basis"].logpdf(P[name])
                lp += value
                G[name] += g
            value, g = priors["alpha"].logpdf_log_scale(P["log_alpha"])
            lp += value
            G["log_alpha"] += g
            value, g = priors["rho"].logpdf_log_scale(P["log_rho"])
            lp += value
            G["log_rho"] += g

        return lp, grad


def _pm_matrix(sample, pm_design):
    if pm_design is None:
        if sample.D.shape[1]:
            return np.column_stack([sample.X, sample.D]), tuple(sample.x_names) + tuple(sample.d_names)
        return sample.X, tuple(sample.x_names)
    matrix = np.asarray(pm_design, dtype=float)
    if matrix.ndim == 1:
        matrix = matrix[:, None]
    if matrix.shape[0] != sample.n_C:
        raise DimensionError(f"PM design has {matrix.shape[0]} rows for {sample.n_C} pooled units")
    return matrix, tuple(f"pm[{i}]" for i in range(matrix.shape[1]))


def _check_outcome(family, y):
    if family.kind == "bernoulli_logit" and not np.all((y == 0) | (y == 1)):
        raise ValidationError("bernoulli outcome must be coded 0/1")
    if family.kind == "negbinom_log_offset" and (np.any(y < 0) or np.any(y != np.round(y))):
        raise ValidationError("negative binomial outcome must be a nonnegative count")


def assemble_model(sample, family="normal", basis_size=10, boundary_factor=1.25, priors=None,
                   augmentation="gp", pm_design=None, qr_design=None, pm_names=None, qr_names=None,
                   tau=1.0, use_known_pi_R=True):
    """Build the joint model and its warm start from frequentist fits"""
    family = family if isinstance(family, OutcomeFamily) else OutcomeFamily(family)
    if augmentation not in AUGMENTATIONS:
        raise ConfigError(f"unknown augmentation '{augmentation}'; expected one of {AUGMENTATIONS}")
    has_offset = sample.offset is not None
    if family.needs_offset and not has_offset:
        raise ConfigError("negbinom_log_offset requires an offset on every record")
    if has_offset and not family.needs_offset:
        raise ConfigError(f"an offset is only used by negbinom_log_offset, not {family.kind}")
    merged_priors = default_priors()
    merged_priors.update(priors or {})

    qr_raw = sample.X if qr_design is None else np.asarray(qr_design, dtype=float)
    if qr_raw.ndim == 1:
        qr_raw = qr_raw[:, None]
    if qr_raw.shape[0] != sample.n_C:
        raise DimensionError(f"QR design has {qr_raw.shape[0]} rows for {sample.n_C} pooled units")
    qr_std, qr_center, qr_scale = _standardize(qr_raw)
    Z = _with_intercept(qr_std)
    pm_raw, default_pm_names = _pm_matrix(sample, pm_design)
    X_pm, pm_center, pm_scale = _standardize(pm_raw)

    y_A = sample.y_A
    _check_outcome(family, y_A)
    y_center, y_scale = 0.0, 1.0
    if family.kind == "normal":
        y_center = float(np.mean(y_A))
        y_scale = float(np.std(y_A)) or 1.0
    y_model = (y_A - y_center) / y_scale

    in_A = sample.in_A
    in_R = sample.in_R
    w_R = sample.w_R
    w_bar = float(np.mean(w_R))
    known = use_known_pi_R and sample.pi_R is not None
    log_offset = np.log(sample.offset) if has_offset else np.zeros(sample.n_C)

    # warm start
    membership = fit_glm(GlmSpec("bernoulli_logit", include_intercept=False), Z, in_A.astype(float))
    phi0 = membership.coefficients
    if known:
        gamma0 = None
        log_pi_R = np.log(sample.pi_R)
        u_init = log_pi_R + Z @ phi0
    else:
        weights = fit_glm(GlmSpec("gaussian_logmean", include_intercept=False), Z[in_R], w_R / w_bar)
        gamma0 = weights.coefficients
        log_pi_R = None
        u_init = Z @ (phi0 - gamma0) - np.log(w_bar)

    outcome_spec = {"normal": "gaussian_identity", "bernoulli_logit": "bernoulli_logit",
                    "negbinom_log_offset": "negbinom_log"}[family.kind]
    outcome = fit_glm(GlmSpec(outcome_spec), X_pm[in_A], y_model,
                      exposure=sample.offset[in_A] if has_offset else None)

    blocks = [("phi", Z.shape[1])]
    if not known:
        blocks += [("gamma", Z.shape[1]), ("log_lambda", 1)]
    blocks += [("theta0", 1), ("theta", X_pm.shape[1])]
    basis = None
    lwp_scale = 1.0
    if augmentation == "gp":
        basis = build_basis(u_init, l=basis_size, c=boundary_factor)
        blocks += [("log_alpha", 1), ("log_rho", 1), ("beta", basis.l), ("eta_poly", 2)]
    elif augmentation == "lwp":
        lwp_scale = float(np.mean(np.exp(-u_init)))
        blocks += [("theta_star", 1)]
    if family.dispersion_block:
        blocks += [(family.dispersion_block, 1)]
    layout = ParameterLayout(blocks)

    init = np.zeros(layout.dim)
    P = layout.unpack(init)
    P["phi"][:] = phi0
    if not known:
        P["gamma"][:] = gamma0
        P["log_lambda"][:] = 0.5 * np.log(max(weights.dispersion, 1e-8))
    P["theta0"][:] = outcome.coefficients[0]
    P["theta"][:] = outcome.coefficients[1:]
    if family.kind == "normal":
        P["log_sigma"][:] = 0.5 * np.log(max(outcome.dispersion, 1e-8))
    elif family.kind == "negbinom_log_offset":
        P["log_nb_sigma"][:] = np.log(max(outcome.dispersion, 1e-8))

    model = JointModel(
        family=family, augmentation=augmentation, layout=layout, Z=Z, in_A=in_A, in_R=in_R,
        X_pm=X_pm, y_A=y_model, log_offset=log_offset,
        w_tilde=w_R / w_bar, log_w_bar=np.log(w_bar), log_pi_R=log_pi_R,
        qr_center=qr_center, qr_scale=qr_scale, pm_center=pm_center, pm_scale=pm_scale,
        y_center=y_center, y_scale=y_scale,
        qr_names=tuple(qr_names or (sample.x_names if qr_design is None
                                    else [f"qr[{i}]" for i in range(qr_raw.shape[1])])),
        pm_names=tuple(pm_names or default_pm_names),
        priors=merged_priors, basis=basis, tau=tau, lwp_scale=lwp_scale,
        init=init, u_init=u_init,
        metadata={"family": family.kind, "augmentation": augmentation, "known_pi_R": known,
                  "basis_size": basis_size if basis else 0, "boundary_factor": boundary_factor,
                  "dim": layout.dim},
    )
    lp, _ = log_density_and_grad(model, init)
    if not np.isfinite(lp):
        raise ConfigError("joint log density is not finite at the warm start")
    logger.info("Assembled %s/%s joint model with %d parameters", family.kind, augmentation, layout.dim)
    return model


def posterior_predict(model, draws, rng):
    """Predictive outcomes for S_R units and predictive means for S_A units

    Returns (y_rep_R, y_rep_A), each with one row per draw, on the
    original outcome scale.
    """
    draws = np.atleast_2d(np.asarray(draws, dtype=float))
    if draws.shape[0] == 0:
        raise ConfigError("posterior_predict needs at least one draw")
    if draws.shape[1] != model.dim:
        raise DimensionError(f"draws have {draws.shape[1]} columns, model dimension is {model.dim}")
    M = draws.shape[0]
    eta_R = np.empty((M, int(model.in_R.sum())))
    eta_A = np.empty((M, int(model.in_A.sum())))
    dispersion = np.ones(M)
    block = model.family.dispersion_block
    for m in range(M):
        P = model.layout.unpack(draws[m])
        u = model.gp_input(P)
        eta_R[m] = model.linear_predictor(P, u, model.in_R)
        eta_A[m] = model.linear_predictor(P, u, model.in_A)
        if block is not None:
            dispersion[m] = np.exp(P[block][0])

    kind = model.family.kind
    if kind == "normal":
        noise = rng.standard_normal(eta_R.shape) * dispersion[:, None]
        y_rep_R = (eta_R + noise) * model.y_scale + model.y_center
        y_rep_A = eta_A * model.y_scale + model.y_center
    elif kind == "bernoulli_logit":
        p_R = special.expit(eta_R)
        y_rep_R = (rng.uniform(size=p_R.shape) < p_R).astype(float)
        y_rep_A = special.expit(eta_A)
    else:
        r = (1.0 / dispersion)[:, None]
        mu_R = np.exp(eta_R)
        y_rep_R = rng.negative_binomial(np.broadcast_to(r, mu_R.shape), r / (r + mu_R)).astype(float)
        y_rep_A = np.exp(eta_A)
    return y_rep_R, y_rep_A


@dataclass(eq=False)
class JointPosterior:
    model: JointModel
    draws: np.ndarray
    y_rep_R: np.ndarray
    y_rep_A: np.ndarray
    diagnostics: dict = field(default_factory=dict)

    @property
    def M(self):
        return self.draws.shape[0]

    def natural_draws(self):
        """Parameter draws back on the original covariate, weight and outcome scales"""
        model = self.model
        blocks = {name: self.draws[:, s] for name, s in model.layout.slices.items()}
        out = {}

        phi = _natural_coefficients(blocks["phi"], model.qr_center, model.qr_scale)
        out.update({f"phi[{n}]": phi[:, i] for i, n in enumerate(("(Intercept)",) + model.qr_names)})
        if "gamma" in blocks:
            gamma = _natural_coefficients(blocks["gamma"], model.qr_center, model.qr_scale,
                                          shift=model.log_w_bar)
            out.update({f"gamma[{n}]": gamma[:, i] for i, n in enumerate(("(Intercept)",) + model.qr_names)})
            out["lambda"] = np.exp(blocks["log_lambda"][:, 0] + model.log_w_bar)

        theta = _natural_coefficients(np.column_stack([blocks["theta0"], blocks["theta"]]),
                                      model.pm_center, model.pm_scale,
                                      shift=model.y_center, multiplier=model.y_scale)
        out.update({f"theta[{n}]": theta[:, i] for i, n in enumerate(("(Intercept)",) + model.pm_names)})
        if "theta_star" in blocks:
            out["theta_star"] = blocks["theta_star"][:, 0] * model.y_scale / model.lwp_scale
        if "log_sigma" in blocks:
            out["sigma"] = np.exp(blocks["log_sigma"][:, 0]) * model.y_scale
        if "log_nb_sigma" in blocks:
            out["nb_sigma"] = np.exp(blocks["log_nb_sigma"][:, 0])
        if "log_alpha" in blocks:
            out["alpha"] = np.exp(blocks["log_alpha"][:, 0]) * model.y_scale
            out["rho"] = np.exp(blocks["log_rho"][:, 0])
        return pd.DataFrame(out)

    def summary(self, level=0.95):
        frame = self.natural_draws()
        q = (1.0 - level) / 2.0
        return pd.DataFrame({
            "mean": frame.mean(),
            "sd": frame.std(ddof=1),
            f"q{100 * q:g}": frame.quantile(q),
            f"q{100 * (1 - q):g}": frame.quantile(1 - q),
        }).rename_axis("parameter").reset_index()


def sample_posterior(model, config=None, workers=1):
    """Run HMC on the joint model and attach posterior predictive draws"""
    config = config or HmcConfig()
    run = run_hmc(model, config, init=model.initial_point(), workers=workers)
    draws = run.flat_draws
    # stream after the per-chain streams (seed, 0..chains-1)
    rng = np.random.default_rng([config.seed, config.chains])
    y_rep_R, y_rep_A = posterior_predict(model, draws, rng)
    diagnostics = run.diagnostics()
    diagnostics["model"] = dict(model.metadata)
    return JointPosterior(model=model, draws=draws, y_rep_R=y_rep_R, y_rep_A=y_rep_A,
                          diagnostics=diagnostics)
