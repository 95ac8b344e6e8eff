"""Matérn-3/2 plus normalized polynomial kernel on the log-propensity input,
its reduced-rank Laplace-eigenfunction expansion and the kernel-weighting
view of GP prediction.

Only the stationary Matérn part is expanded in the sine basis; the order-1
normalized polynomial kernel is exact with the two features
[tau, u] / sqrt(tau^2 + u^2).
"""

import logging
from dataclasses import dataclass

import numpy as np

from gppp.errors import ConfigError, DegenerateInputError

logger = logging.getLogger(__name__)

SQRT3 = np.sqrt(3.0)


@dataclass(frozen=True)
class KernelParams:
    alpha: float = 1.0
    rho: float = 1.0
    tau: float = 1.0
    nu: float = 1.5
    poly_order: int = 1

    def __post_init__(self):
        if not (self.alpha > 0 and self.rho > 0 and self.tau > 0):
            raise ConfigError("kernel alpha, rho and tau must be positive")
        if self.nu != 1.5 or self.poly_order != 1:
            raise ConfigError("only nu=3/2 and polynomial order 1 are supported")


def matern32(r, alpha, rho):
    scaled = SQRT3 * np.abs(r) / rho
    return alpha ** 2 * (1.0 + scaled) * np.exp(-scaled)


def poly_kernel(u_i, u_j, tau):
    return (tau ** 2 + u_i * u_j) / (np.sqrt(tau ** 2 + u_i ** 2) * np.sqrt(tau ** 2 + u_j ** 2))


def matern_poly_kernel(u_i, u_j, params):
    """Matérn-3/2 plus standardized inhomogeneous polynomial kernel (broadcasts)"""
    u_i = np.asarray(u_i, dtype=float)
    u_j = np.asarray(u_j, dtype=float)
    return matern32(u_i - u_j, params.alpha, params.rho) + poly_kernel(u_i, u_j, params.tau)


def gram_matrix(u_rows, u_cols, params):
    u_rows = np.asarray(u_rows, dtype=float)
    u_cols = np.asarray(u_cols, dtype=float)
    return matern_poly_kernel(u_rows[:, None], u_cols[None, :], params)


def spectral_density_matern32(omega, alpha, rho):
    """S(ω) = 12√3 α² ρ⁻³ (3/ρ² + ω²)⁻²"""
    omega = np.asarray(omega, dtype=float)
    return 12.0 * SQRT3 * alpha ** 2 * rho ** -3 / (3.0 / rho ** 2 + omega ** 2) ** 2


def poly_features(u, tau):
    """Exact rank-2 feature map of the normalized order-1 polynomial kernel"""
    u = np.asarray(u, dtype=float)
    norm = np.sqrt(tau ** 2 + u ** 2)
    return np.column_stack([np.full_like(u, tau) / norm, u / norm])


def poly_features_derivative(u, tau):
    u = np.asarray(u, dtype=float)
    denom = (tau ** 2 + u ** 2) ** 1.5
    return np.column_stack([-tau * u / denom, tau ** 2 / denom])


@dataclass(frozen=True, eq=False)
class LowRankBasis:
    """Sine eigenfunctions of the Laplacian on [center - L, center + L]"""

    l: int
    c: float
    L: float
    center: float

    @property
    def frequencies(self):
        """Square roots of the Laplacian eigenvalues, ω_j = πj / (2L)"""
        return np.pi * np.arange(1, self.l + 1) / (2.0 * self.L)

    def _phase(self, u):
        u = np.asarray(u, dtype=float)
        return (u - self.center + self.L)[:, None] * self.frequencies[None, :]

    def features(self, u):
        """φ_j(u) = L^{-1/2} sin(πj(u - ū + L) / 2L), shape (n, l)"""
        return np.sin(self._phase(u)) / np.sqrt(self.L)

    def feature_derivatives(self, u):
        return np.cos(self._phase(u)) * self.frequencies[None, :] / np.sqrt(self.L)

    def spectral_scales(self, alpha, rho):
        """√S(ω_j); multiplies standard-normal basis coefficients"""
        return np.sqrt(spectral_density_matern32(self.frequencies, alpha, rho))

    def log_scale_rho_derivative(self, rho):
        """d log √S(ω_j) / d log ρ"""
        return -1.5 + 6.0 / (3.0 + (rho * self.frequencies) ** 2)

    def approx_matern_gram(self, u_rows, u_cols, alpha, rho):
        Phi_r = self.features(u_rows)
        Phi_c = self.features(u_cols)
        S = spectral_density_matern32(self.frequencies, alpha, rho)
        return (Phi_r * S[None, :]) @ Phi_c.T


def build_basis(u, l=10, c=1.25):
    """Basis centered at mean(u) with half-width L = c·max|u - ū|"""
    u = np.asarray(u, dtype=float)
    if u.size == 0:
        raise DegenerateInputError("cannot build a basis from an empty input")
    if l < 1:
        raise ConfigError("number of basis functions must be at least 1")
    if not c > 1:
        raise ConfigError("boundary factor c must exceed 1")
    center = float(np.mean(u))
    spread = float(np.max(np.abs(u - center)))
    if spread == 0:
        raise DegenerateInputError("GP input has zero spread; cannot size the basis domain")
    basis = LowRankBasis(l=int(l), c=float(c), L=c * spread, center=center)
    logger.debug("Built %d-function basis on [%.4g, %.4g]", l, center - basis.L, center + basis.L)
    return basis


def kernel_smoother_weights(u_targets, u_sources, params):
    """Row-normalized kernel weights w̃_ij = k(u_i, u_j) / Σ_j k(u_i, u_j)

    The polynomial term can go negative for inputs of opposite sign; a row
    whose kernel sum is not positive falls back to uniform weights.
    """
    u_sources = np.asarray(u_sources, dtype=float)
    if u_sources.size == 0:
        raise DegenerateInputError("kernel smoother needs at least one source")
    K = gram_matrix(u_targets, u_sources, params)
    row_sums = K.sum(axis=1, keepdims=True)
    bad = ~(row_sums[:, 0] > 0)
    if bad.any():
        logger.warning("%d smoother row(s) had a non-positive kernel sum; using uniform weights", int(bad.sum()))
        K[bad] = 1.0
        row_sums[bad] = u_sources.size
    return K / row_sums


def gp_equivalent_weights(u_targets, u_sources, params, noise_variance):
    """Row-normalized k(u_i, ·)ᵀ (K + σ²I)⁻¹, the GP predictor's weight on each source"""
    u_sources = np.asarray(u_sources, dtype=float)
    K_ss = gram_matrix(u_sources, u_sources, params)
    K_ts = gram_matrix(u_targets, u_sources, params)
    A = K_ss + noise_variance * np.eye(u_sources.shape[0])
    raw = np.linalg.solve(A, K_ts.T).T
    return raw / raw.sum(axis=1, keepdims=True)


def pooled_pseudo_weights(smoother, w_R):
    """ŵ_j = Σ_i k_ij w^R_i: reference weight mass carried to each source unit"""
    return np.asarray(smoother).T @ np.asarray(w_R, dtype=float)
