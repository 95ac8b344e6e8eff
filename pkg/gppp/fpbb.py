"""Finite-population Bayesian bootstrap over reference-sample post-strata.

Each draw takes stratum shares ξ from their Dirichlet posterior, tilts
them by the non-sampling odds (1 - π_j)/π_j and allocates the N - n_R
unobserved units multinomially.
"""

import logging
from dataclasses import dataclass

import numpy as np

from gppp.bayes_core import sample_dirichlet_posterior
from gppp.errors import ConfigError, DegenerateInputError, DimensionError, DrawMismatchError

logger = logging.getLogger(__name__)

PI_CEILING = 1.0 - 1e-9


@dataclass(frozen=True, eq=False)
class PolyaPosterior:
    """Stratum sizes N_j (M × J) and the share draws ξ behind them"""

    N_draws: np.ndarray
    xi_draws: np.ndarray
    N: int

    @property
    def M(self):
        return self.N_draws.shape[0]


def draw_polya(strata, N, M, alpha=None, rng=None, conjugacy="shifted"):
    n_j = np.asarray(strata.counts, dtype=np.int64)
    n_R = int(n_j.sum())
    N = int(N)
    if M < 1:
        raise ConfigError("number of Polya draws must be at least 1")
    if N < n_R:
        raise ConfigError(f"population size {N} is smaller than the reference sample ({n_R})")
    rng = rng if rng is not None else np.random.default_rng()
    alpha = np.ones(strata.J) if alpha is None else np.broadcast_to(np.asarray(alpha, dtype=float), (strata.J,))

    pi = np.asarray(strata.pi, dtype=float)
    if np.any(pi <= 0) or np.any(pi > 1):
        raise ConfigError("stratum inclusion probabilities must lie in (0, 1]")
    remaining = N - n_R
    if remaining > 0 and np.all(pi >= 1.0):
        raise DegenerateInputError("every stratum has pi = 1 but the population exceeds the sample")
    if remaining > 0:
        pi = np.minimum(pi, PI_CEILING)

    xi = sample_dirichlet_posterior(n_j, alpha, rng, conjugacy=conjugacy, size=M)
    tilted = xi * ((1.0 - pi) / pi)[None, :]
    tilted /= tilted.sum(axis=1, keepdims=True)
    if remaining > 0:
        r = rng.multinomial(remaining, tilted)
    else:
        r = np.zeros((M, strata.J), dtype=np.int64)
    N_draws = n_j[None, :] + r
    logger.debug("Drew %d Polya allocations of %d unobserved units over %d strata", M, remaining, strata.J)
    return PolyaPosterior(N_draws=N_draws, xi_draws=xi, N=N)


def expand_predictions(polya, strata, y_rep_R, labels=None):
    """ŷ_U^(m) = Σ_j (N_j^(m) / n_j) Σ_{i in j} ŷ_i^(m)"""
    y_rep_R = np.atleast_2d(np.asarray(y_rep_R, dtype=float))
    labels = np.asarray(strata.labels if labels is None else labels)
    if y_rep_R.shape[0] != polya.M:
        raise DrawMismatchError(f"{y_rep_R.shape[0]} predictive draws for {polya.M} Polya draws")
    if y_rep_R.shape[1] != labels.shape[0]:
        raise DimensionError(f"{y_rep_R.shape[1]} predicted units for {labels.shape[0]} stratum labels")
    if np.any(labels < 0) or np.any(labels >= strata.J):
        raise DimensionError("stratum label outside 0..J-1")
    membership = np.zeros((labels.shape[0], strata.J))
    membership[np.arange(labels.shape[0]), labels] = 1.0
    counts = membership.sum(axis=0)
    if np.any(counts == 0):
        empty = np.flatnonzero(counts == 0)
        raise DegenerateInputError(f"no predicted units mapped to strata {empty.tolist()}")
    stratum_sums = y_rep_R @ membership
    return np.sum(polya.N_draws / counts[None, :] * stratum_sums, axis=1)
