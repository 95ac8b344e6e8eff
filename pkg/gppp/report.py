"""Estimate reports and interval construction."""

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

Z_975 = float(stats.norm.ppf(0.975))


@dataclass(eq=False)
class EstimateReport:
    """Point estimate, draws (posterior or bootstrap) and interval for one method

    ``interval_kind`` is "percentile" for posterior draws and "normal" for
    bootstrap z-intervals.
    """

    method: str
    point: float
    draws: np.ndarray = None
    interval: tuple = (math.nan, math.nan)
    variance: float = math.nan
    level: float = 0.95
    interval_kind: str = "percentile"
    metadata: dict = field(default_factory=dict)

    @property
    def se(self):
        return math.sqrt(self.variance) if self.variance >= 0 else math.nan

    def to_dict(self):
        return {
            "method": self.method,
            "point": float(self.point),
            "interval": [float(self.interval[0]), float(self.interval[1])],
            "level": self.level,
            "interval_kind": self.interval_kind,
            "variance": float(self.variance),
            "se": float(self.se),
            "n_draws": 0 if self.draws is None else int(len(self.draws)),
            "metadata": self.metadata,
        }


def percentile_interval(draws, level=0.95):
    """Order-statistic interval at ceil(q·M) for q = (1-level)/2 and 1-(1-level)/2"""
    draws = np.sort(np.asarray(draws, dtype=float))
    M = draws.shape[0]
    if M < 2:
        raise ValueError("percentile_interval needs at least two draws")
    if not 0 < level < 1:
        raise ValueError("level must lie in (0, 1)")
    q = (1.0 - level) / 2.0
    # Round before ceil so q·M landing on an integer is not pushed up by float noise
    lower = max(math.ceil(round(q * M, 9)), 1)
    upper = max(math.ceil(round((1.0 - q) * M, 9)), 1)
    return float(draws[lower - 1]), float(draws[min(upper, M) - 1])


def hpd_interval(draws, level=0.95):
    """Shortest interval containing ceil(level·M) draws"""
    draws = np.sort(np.asarray(draws, dtype=float))
    M = draws.shape[0]
    if M < 2:
        raise ValueError("hpd_interval needs at least two draws")
    inside = min(max(math.ceil(level * M), 2), M)
    widths = draws[inside - 1:] - draws[:M - inside + 1]
    start = int(np.argmin(widths))
    return float(draws[start]), float(draws[start + inside - 1])


def normal_interval(point, variance, level=0.95):
    z = float(stats.norm.ppf(0.5 + level / 2.0))
    half = z * math.sqrt(max(variance, 0.0))
    return point - half, point + half


def posterior_report(method, draws, level=0.95, metadata=None):
    draws = np.asarray(draws, dtype=float)
    return EstimateReport(
        method=method,
        point=float(np.mean(draws)),
        draws=draws,
        interval=percentile_interval(draws, level),
        variance=float(np.var(draws, ddof=1)),
        level=level,
        interval_kind="percentile",
        metadata=metadata or {},
    )


def bootstrap_report(method, point, replicates, level=0.95, metadata=None):
    replicates = np.asarray(replicates, dtype=float)
    variance = float(np.var(replicates, ddof=1))
    return EstimateReport(
        method=method,
        point=float(point),
        draws=replicates,
        interval=normal_interval(point, variance, level),
        variance=variance,
        level=level,
        interval_kind="normal",
        metadata=metadata or {},
    )
