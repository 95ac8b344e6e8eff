"""Priors, log-density plumbing and a static-trajectory HMC sampler.

Models handed to :func:`run_hmc` expose ``dim``, ``parameter_names`` and
``log_density_and_grad(q) -> (float, ndarray)`` over an unconstrained
vector; an optional ``initial_point()`` gives the warm start.
"""

import logging
import math
from dataclasses import asdict, dataclass, field

import numpy as np
from joblib import Parallel, delayed
from scipy import special

from gppp.errors import ConfigError, SamplerError

logger = logging.getLogger(__name__)

DIVERGENCE_THRESHOLD = 1000.0
PRIOR_KINDS = ("normal", "student_t", "half_student_t", "half_cauchy", "gig", "dirichlet")


# Prior log densities: each returns (log p(x), d log p / dx)

def normal_logpdf(x, loc=0.0, scale=1.0):
    z = (x - loc) / scale
    lp = -0.5 * z ** 2 - math.log(scale) - 0.5 * math.log(2.0 * math.pi)
    return np.sum(lp), -z / scale


def student_t_logpdf(x, df=3.0, loc=0.0, scale=1.0):
    z = (x - loc) / scale
    const = (special.gammaln((df + 1.0) / 2.0) - special.gammaln(df / 2.0)
             - 0.5 * math.log(df * math.pi) - math.log(scale))
    lp = const - 0.5 * (df + 1.0) * np.log1p(z ** 2 / df)
    grad = -(df + 1.0) * z / (scale * (df + z ** 2))
    return np.sum(lp), grad


def half_student_t_logpdf(x, df=3.0, loc=0.0, scale=1.0):
    """Student-t folded at ``loc``; x must lie above loc"""
    lp, grad = student_t_logpdf(x, df, loc, scale)
    return lp + np.size(x) * math.log(2.0), grad


def half_cauchy_logpdf(x, scale=1.0):
    lp = math.log(2.0) - math.log(math.pi * scale) - np.log1p((x / scale) ** 2)
    return np.sum(lp), -2.0 * x / (scale ** 2 + x ** 2)


def gig_logpdf(x, p=0.0, a=1.0, b=2.0):
    """Generalized inverse Gaussian, density ∝ x^(p-1) exp(-(a·x + b/x)/2)"""
    omega = math.sqrt(a * b)
    # kve is exp-scaled: log K_p(ω) = log kve(p, ω) - ω
    log_norm = 0.5 * p * math.log(a / b) - math.log(2.0) - (math.log(special.kve(p, omega)) - omega)
    lp = log_norm + (p - 1.0) * np.log(x) - 0.5 * (a * x + b / x)
    grad = (p - 1.0) / x - 0.5 * a + 0.5 * b / x ** 2
    return np.sum(lp), grad


@dataclass(frozen=True)
class PriorSpec:
    """One prior family with its hyperparameters

    Defaults follow the model: t(3, 0, 1) for coefficients, half-t(3, 0, 1)
    for scales, GIG(0, 1, 2) for the Matérn length-scale, half-Cauchy(0, 3)
    for the negative binomial dispersion and a flat Dirichlet over strata.
    """

    kind: str
    df: float = 3.0
    loc: float = 0.0
    scale: float = 1.0
    p: float = 0.0
    a: float = 1.0
    b: float = 2.0
    alpha: float = 1.0

    def __post_init__(self):
        if self.kind not in PRIOR_KINDS:
            raise ConfigError(f"unknown prior kind '{self.kind}'; expected one of {PRIOR_KINDS}")
        if not (self.df > 0 and self.scale > 0 and self.a > 0 and self.b > 0 and self.alpha > 0):
            raise ConfigError(f"{self.kind} prior needs positive df, scale, a, b and alpha")

    @classmethod
    def from_dict(cls, data):
        return cls(**data)

    def to_dict(self):
        return asdict(self)

    def logpdf(self, x):
        """(log density, gradient) on the natural scale"""
        if self.kind == "normal":
            return normal_logpdf(x, self.loc, self.scale)
        if self.kind == "student_t":
            return student_t_logpdf(x, self.df, self.loc, self.scale)
        if self.kind == "half_student_t":
            return half_student_t_logpdf(x, self.df, self.loc, self.scale)
        if self.kind == "half_cauchy":
            return half_cauchy_logpdf(x, self.scale)
        if self.kind == "gig":
            return gig_logpdf(x, self.p, self.a, self.b)
        raise ConfigError("dirichlet prior is sampled by conjugacy, not through a density")

    def logpdf_log_scale(self, eta):
        """Density of eta = log x, Jacobian included"""
        x = np.exp(eta)
        lp, grad = self.logpdf(x)
        return lp + np.sum(eta), grad * x + 1.0


def default_priors():
    return {
        "coefficients": PriorSpec("student_t"),
        "scale": PriorSpec("half_student_t"),
        "alpha": PriorSpec("half_student_t"),
        "rho": PriorSpec("gig"),
        "nb_sigma": PriorSpec("half_cauchy", scale=3.0),
        "basis": PriorSpec("normal"),
        "strata": PriorSpec("dirichlet"),
    }


@dataclass(frozen=True)
class HmcConfig:
    warmup: int = 500
    draws: int = 500
    n_leapfrog: int = 32
    jitter: bool = True
    step_size: float = 0.1
    target_accept: float = 0.8
    seed: int = 0
    chains: int = 2
    init_jitter: float = 0.1

    def __post_init__(self):
        if self.draws < 1:
            raise ConfigError("HMC draws must be at least 1")
        if self.warmup < 0:
            raise ConfigError("HMC warmup must be nonnegative")
        if self.n_leapfrog < 1 or self.chains < 1:
            raise ConfigError("n_leapfrog and chains must be positive")
        if not self.step_size > 0:
            raise ConfigError("initial step size must be positive")
        if not 0 < self.target_accept < 1:
            raise ConfigError("target_accept must lie in (0, 1)")

    @classmethod
    def from_dict(cls, data):
        return cls(**data)

    def to_dict(self):
        return asdict(self)


def log_density_and_grad(model, q):
    """Evaluate the model; any non-finite value comes back as (-inf, zeros)"""
    q = np.asarray(q, dtype=float)
    if not np.all(np.isfinite(q)):
        return -np.inf, np.zeros_like(q)
    with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
        lp, grad = model.log_density_and_grad(q)
    if not (np.isfinite(lp) and np.all(np.isfinite(grad))):
        return -np.inf, np.zeros_like(q)
    return float(lp), grad


def leapfrog(model, q, p, grad, step_size, n_steps, inv_mass):
    """Integrate ``n_steps`` leapfrog steps from (q, p)

    ``grad`` is the gradient at q, so each step costs one density
    evaluation. Stops early at a non-finite density.
    """
    q = np.array(q, dtype=float)
    p = p + 0.5 * step_size * grad
    lp = -np.inf
    for i in range(n_steps):
        q = q + step_size * inv_mass * p
        lp, grad = log_density_and_grad(model, q)
        if not np.isfinite(lp):
            return q, p, lp, grad, i + 1
        p = p + (step_size if i < n_steps - 1 else 0.5 * step_size) * grad
    return q, p, lp, grad, n_steps


class DualAveraging:
    """Step-size adaptation toward a target acceptance rate"""

    def __init__(self, step_size, target, gamma=0.05, t0=10.0, kappa=0.75):
        self.target = target
        self.gamma = gamma
        self.t0 = t0
        self.kappa = kappa
        self.restart(step_size)

    def restart(self, step_size):
        self.mu = math.log(10.0 * step_size)
        self.h_bar = 0.0
        self.log_step = math.log(step_size)
        self.log_step_bar = 0.0
        self.t = 0

    def update(self, accept_prob):
        self.t += 1
        eta = 1.0 / (self.t + self.t0)
        self.h_bar = (1.0 - eta) * self.h_bar + eta * (self.target - accept_prob)
        self.log_step = self.mu - math.sqrt(self.t) / self.gamma * self.h_bar
        weight = self.t ** -self.kappa
        self.log_step_bar = weight * self.log_step + (1.0 - weight) * self.log_step_bar
        return math.exp(self.log_step)

    @property
    def final_step_size(self):
        return math.exp(self.log_step_bar)


def adaptation_windows(warmup, init_buffer=75, term_buffer=50, base_window=25):
    """(start, end) iteration ranges of the slow mass-matrix windows (empty when warmup is short)"""
    if warmup < 20:
        return []
    if init_buffer + term_buffer + base_window > warmup:
        init_buffer = int(0.15 * warmup)
        term_buffer = int(0.1 * warmup)
        base_window = warmup - init_buffer - term_buffer
    ends = []
    start = init_buffer
    size = base_window
    last = warmup - term_buffer
    while start < last:
        end = start + size
        # Stretch the final window when the next one would not fit
        if end + 2 * size > last:
            end = last
        ends.append((start, end))
        start = end
        size *= 2
    return ends


def _n_steps(config, rng):
    if not config.jitter:
        return config.n_leapfrog
    low = max(1, int(math.ceil(config.n_leapfrog / 2)))
    high = max(low, int(math.floor(3 * config.n_leapfrog / 2)))
    return int(rng.integers(low, high + 1))


def _run_chain(model, config, chain, init):
    rng = np.random.default_rng([config.seed, chain])
    dim = model.dim
    q = np.asarray(init, dtype=float) + rng.uniform(-config.init_jitter, config.init_jitter, dim)
    lp, grad = log_density_and_grad(model, q)
    if not np.isfinite(lp):
        q = np.asarray(init, dtype=float)
        lp, grad = log_density_and_grad(model, q)
    if not np.isfinite(lp):
        raise SamplerError(f"chain {chain}: log density is not finite at the initial point",
                           {"chain": chain})
    evals = 1

    inv_mass = np.ones(dim)
    step_size = config.step_size
    adapter = DualAveraging(step_size, config.target_accept)
    windows = adaptation_windows(config.warmup)
    window_ends = {end for _, end in windows}
    window_start = windows[0][0] if windows else config.warmup
    window_draws = []
    warmup_divergent = 0

    draws = np.empty((config.draws, dim))
    energy_errors = np.empty(config.draws)
    accept_sum = 0.0
    divergences = 0

    for it in range(config.warmup + config.draws):
        warming = it < config.warmup
        p0 = rng.standard_normal(dim) / np.sqrt(inv_mass)
        h0 = -lp + 0.5 * np.sum(inv_mass * p0 ** 2)
        n_steps = _n_steps(config, rng)
        q1, p1, lp1, grad1, used = leapfrog(model, q, p0, grad, step_size, n_steps, inv_mass)
        evals += used
        h1 = -lp1 + 0.5 * np.sum(inv_mass * p1 ** 2) if np.isfinite(lp1) else np.inf
        delta = h1 - h0
        divergent = not np.isfinite(delta) or delta > DIVERGENCE_THRESHOLD
        accept_prob = 0.0 if divergent else min(1.0, math.exp(-delta))
        if rng.uniform() < accept_prob:
            q, lp, grad = q1, lp1, grad1

        if warming:
            warmup_divergent += int(divergent)
            step_size = adapter.update(accept_prob)
            if it >= window_start:
                window_draws.append(q.copy())
            if it + 1 in window_ends:
                window = np.asarray(window_draws)
                n = window.shape[0]
                if n > 1:
                    var = np.var(window, axis=0, ddof=1)
                    inv_mass = (n / (n + 5.0)) * var + 1e-3 * (5.0 / (n + 5.0))
                window_draws = []
                adapter.restart(step_size)
                logger.debug("chain %d: mass matrix updated at iteration %d", chain, it + 1)
            if it + 1 == config.warmup:
                step_size = adapter.final_step_size
                logger.debug("chain %d: warmup done, step size %.4g", chain, step_size)
        else:
            k = it - config.warmup
            draws[k] = q
            energy_errors[k] = delta if np.isfinite(delta) else np.inf
            accept_sum += accept_prob
            divergences += int(divergent)

    if config.warmup > 0 and warmup_divergent == config.warmup:
        raise SamplerError(f"chain {chain}: every warmup transition diverged",
                           {"chain": chain, "warmup_divergences": warmup_divergent,
                            "step_size": step_size})

    return {
        "draws": draws,
        "energy_errors": energy_errors,
        "accept_rate": accept_sum / config.draws,
        "divergences": divergences,
        "warmup_divergences": warmup_divergent,
        "step_size": step_size,
        "inv_mass": inv_mass,
        "gradient_evals": evals,
    }


def split_rhat(draws):
    """Split-R̂ per coordinate for draws shaped (chains, n, dim)"""
    draws = np.asarray(draws, dtype=float)
    if draws.ndim == 2:
        draws = draws[:, :, None]
    half = draws.shape[1] // 2
    if half < 2:
        return np.full(draws.shape[2], np.nan)
    halves = np.concatenate([draws[:, :half], draws[:, half:2 * half]], axis=0)
    within = np.mean(np.var(halves, axis=1, ddof=1), axis=0)
    between = half * np.var(np.mean(halves, axis=1), axis=0, ddof=1)
    var_plus = (half - 1.0) / half * within + between / half
    with np.errstate(divide="ignore", invalid="ignore"):
        rhat = np.sqrt(var_plus / within)
    return np.where(within > 0, rhat, np.nan)


@dataclass(eq=False)
class HmcRun:
    """Post-warmup states of every chain, shaped (chains, draws, dim)"""

    draws: np.ndarray
    parameter_names: tuple
    accept_rate: np.ndarray
    divergences: np.ndarray
    warmup_divergences: np.ndarray
    step_size: np.ndarray
    inv_mass: np.ndarray
    energy_errors: np.ndarray
    gradient_evals: np.ndarray
    config: HmcConfig = field(default_factory=HmcConfig)

    @property
    def flat_draws(self):
        """Chains stacked in order: shape (chains * draws, dim)"""
        return self.draws.reshape(-1, self.draws.shape[2])

    def rhat(self):
        return split_rhat(self.draws)

    def diagnostics(self):
        rhat = self.rhat()
        finite = rhat[np.isfinite(rhat)]
        return {
            "chains": int(self.draws.shape[0]),
            "draws_per_chain": int(self.draws.shape[1]),
            "accept_rate": [float(a) for a in self.accept_rate],
            "divergences": [int(d) for d in self.divergences],
            "warmup_divergences": [int(d) for d in self.warmup_divergences],
            "step_size": [float(s) for s in self.step_size],
            "gradient_evals": [int(e) for e in self.gradient_evals],
            "median_abs_energy_error": float(np.median(np.abs(self.energy_errors))),
            "max_split_rhat": float(finite.max()) if finite.size else math.nan,
            "split_rhat": dict(zip(self.parameter_names, (float(r) for r in rhat))),
        }


def run_hmc(model, config, init=None, workers=1):
    """Run ``config.chains`` independent chains, one RNG stream per (seed, chain)"""
    if init is None:
        init = model.initial_point() if hasattr(model, "initial_point") else np.zeros(model.dim)
    init = np.asarray(init, dtype=float)
    if init.shape != (model.dim,):
        raise ConfigError(f"initial point has shape {init.shape}, model dimension is {model.dim}")

    logger.info("Running %d HMC chain(s): %d warmup + %d draws, dimension %d",
                config.chains, config.warmup, config.draws, model.dim)
    results = Parallel(n_jobs=min(workers, config.chains))(
        delayed(_run_chain)(model, config, chain, init) for chain in range(config.chains))

    names = tuple(getattr(model, "parameter_names", None) or (f"q[{i}]" for i in range(model.dim)))
    run = HmcRun(
        draws=np.stack([r["draws"] for r in results]),
        parameter_names=names,
        accept_rate=np.array([r["accept_rate"] for r in results]),
        divergences=np.array([r["divergences"] for r in results]),
        warmup_divergences=np.array([r["warmup_divergences"] for r in results]),
        step_size=np.array([r["step_size"] for r in results]),
        inv_mass=np.stack([r["inv_mass"] for r in results]),
        energy_errors=np.stack([r["energy_errors"] for r in results]),
        gradient_evals=np.array([r["gradient_evals"] for r in results]),
        config=config,
    )
    total_div = int(run.divergences.sum())
    if total_div:
        logger.warning("%d divergent transitions after warmup", total_div)
    logger.info("HMC done: acceptance %s", ", ".join(f"{a:.2f}" for a in run.accept_rate))
    return run


def sample_dirichlet_posterior(counts, alpha, rng, conjugacy="shifted", size=None):
    """Draw stratum shares ξ from the Dirichlet posterior

    ``conjugacy="shifted"`` uses parameters n_j + α_j - 1; ``"standard"``
    uses the textbook n_j + α_j.
    """
    counts = np.asarray(counts, dtype=float)
    alpha = np.broadcast_to(np.asarray(alpha, dtype=float), counts.shape)
    if np.any(counts < 0):
        raise ConfigError("stratum counts must be nonnegative")
    if conjugacy not in ("shifted", "standard"):
        raise ConfigError(f"unknown conjugacy '{conjugacy}'; expected 'shifted' or 'standard'")
    params = counts + alpha - (1.0 if conjugacy == "shifted" else 0.0)
    if np.any(params <= 0):
        raise ConfigError("Dirichlet posterior parameter n_j + alpha_j - 1 is not positive; raise alpha")
    if counts.shape[0] == 1:
        return np.ones(1) if size is None else np.ones((size, 1))
    return rng.dirichlet(params, size=size)
