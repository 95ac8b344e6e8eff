"""Pooled two-sample dataset, population metadata and weight post-strata."""

import logging
from dataclasses import dataclass, replace

import numpy as np
import pandas as pd

from gppp.errors import ConfigError, ValidationError

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class SampleSchema:
    """Column mapping from a pooled CSV to the combined sample"""

    in_A: str = "in_A"
    in_R: str = "in_R"
    outcome: str = "y"
    weight: str = "weight_R"
    x: tuple = ()
    d: tuple = ()
    offset: str = None
    pi_R: str = None

    def __post_init__(self):
        object.__setattr__(self, "x", tuple(self.x))
        object.__setattr__(self, "d", tuple(self.d))
        if not self.x:
            raise ConfigError("schema needs at least one covariate in 'x'")
        overlap = set(self.x) & set(self.d)
        if overlap:
            raise ConfigError(f"columns listed in both x and d: {sorted(overlap)}")

    @classmethod
    def from_dict(cls, data):
        known = {"in_A", "in_R", "outcome", "weight", "x", "d", "offset", "pi_R"}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown schema keys: {sorted(unknown)}")
        return cls(**data)

    def to_dict(self):
        return {
            "in_A": self.in_A,
            "in_R": self.in_R,
            "outcome": self.outcome,
            "weight": self.weight,
            "x": list(self.x),
            "d": list(self.d),
            "offset": self.offset,
            "pi_R": self.pi_R,
        }

    def required_columns(self):
        columns = [self.in_A, self.in_R, self.outcome, self.weight, *self.x, *self.d]
        for optional in (self.offset, self.pi_R):
            if optional is not None:
                columns.append(optional)
        return columns


@dataclass(frozen=True)
class UnitRecord:
    outcome: float
    x: np.ndarray
    d: np.ndarray
    in_A: bool
    in_R: bool
    weight_R: float
    offset: float = None


def _as_matrix(values, n):
    values = np.asarray(values, dtype=float)
    if values.ndim == 1:
        values = values.reshape(n, 1)
    return values


def _frozen(array):
    array = np.array(array, dtype=float, copy=True)
    array.setflags(write=False)
    return array


@dataclass(frozen=True, eq=False)
class CombinedSample:
    """Column-wise store of S_A ∪ S_R

    Outcomes are NaN on reference rows and weights are NaN on
    non-probability rows. Arrays are read-only after construction so the
    sample can be shared by concurrent workers.
    """

    y: np.ndarray
    X: np.ndarray
    D: np.ndarray
    in_A: np.ndarray
    weight_R: np.ndarray
    N: int
    x_names: tuple
    d_names: tuple = ()
    offset: np.ndarray = None
    pi_R: np.ndarray = None

    def __post_init__(self):
        in_A = np.array(self.in_A, dtype=bool, copy=True)
        in_A.setflags(write=False)
        object.__setattr__(self, "in_A", in_A)
        object.__setattr__(self, "y", _frozen(self.y))
        n = in_A.shape[0]
        X = _as_matrix(self.X, n)
        D = _as_matrix(self.D, n) if self.D is not None else np.empty((n, 0))
        object.__setattr__(self, "X", _frozen(X))
        object.__setattr__(self, "D", _frozen(D))
        object.__setattr__(self, "weight_R", _frozen(self.weight_R))
        object.__setattr__(self, "x_names", tuple(self.x_names))
        object.__setattr__(self, "d_names", tuple(self.d_names))
        if self.offset is not None:
            object.__setattr__(self, "offset", _frozen(self.offset))
        if self.pi_R is not None:
            object.__setattr__(self, "pi_R", _frozen(self.pi_R))
        object.__setattr__(self, "N", int(self.N))
        self._validate()

    def _validate(self):
        n = self.n_C
        for name in ("y", "weight_R"):
            if getattr(self, name).shape != (n,):
                raise ValidationError(f"'{name}' has shape {getattr(self, name).shape}, expected ({n},)")
        if self.X.shape[1] != len(self.x_names):
            raise ValidationError("x column names do not match the covariate matrix")
        if self.D.shape[1] != len(self.d_names):
            raise ValidationError("d column names do not match the design matrix")

        finite_cov = np.isfinite(self.X).all(axis=1) & np.isfinite(self.D).all(axis=1)
        bad = np.flatnonzero(~finite_cov)
        if bad.size:
            raise ValidationError("non-finite covariate", row=int(bad[0]))

        in_A = self.in_A
        has_y = np.isfinite(self.y)
        has_w = np.isfinite(self.weight_R)

        bad = np.flatnonzero(in_A & ~has_y)
        if bad.size:
            raise ValidationError("S_A row without outcome", row=int(bad[0]))
        bad = np.flatnonzero(~in_A & has_y)
        if bad.size:
            raise ValidationError("outcome present on an S_R row", row=int(bad[0]))
        bad = np.flatnonzero(~in_A & ~has_w)
        if bad.size:
            raise ValidationError("S_R row without weight", row=int(bad[0]))
        bad = np.flatnonzero(in_A & has_w)
        if bad.size:
            raise ValidationError("reference weight present on an S_A row", row=int(bad[0]))
        bad = np.flatnonzero(~in_A & (np.where(has_w, self.weight_R, 1.0) <= 0))
        if bad.size:
            raise ValidationError("nonpositive weight", row=int(bad[0]))

        if self.offset is not None:
            bad = np.flatnonzero(~(self.offset > 0))
            if bad.size:
                raise ValidationError("nonpositive offset", row=int(bad[0]))
        if self.pi_R is not None:
            bad = np.flatnonzero(~((self.pi_R > 0) & (self.pi_R <= 1)))
            if bad.size:
                raise ValidationError("known reference probability outside (0, 1]", row=int(bad[0]))

        if self.n_A == 0 or self.n_R == 0:
            raise ValidationError(f"both samples must be nonempty (n_A={self.n_A}, n_R={self.n_R})")
        if self.N < n:
            raise ValidationError(f"population size {self.N} is smaller than the pooled sample {n}")

    @property
    def n_C(self):
        return int(self.in_A.shape[0])

    @property
    def n_A(self):
        return int(self.in_A.sum())

    @property
    def n_R(self):
        return self.n_C - self.n_A

    @property
    def in_R(self):
        return ~self.in_A

    @property
    def y_A(self):
        return self.y[self.in_A]

    @property
    def w_R(self):
        return self.weight_R[~self.in_A]

    @property
    def records(self):
        """Row view as UnitRecord objects"""
        rows = []
        for i in range(self.n_C):
            a = bool(self.in_A[i])
            rows.append(UnitRecord(
                outcome=float(self.y[i]) if a else None,
                x=self.X[i],
                d=self.D[i],
                in_A=a,
                in_R=not a,
                weight_R=None if a else float(self.weight_R[i]),
                offset=None if self.offset is None else float(self.offset[i]),
            ))
        return rows

    def frame(self):
        """Covariates (x and d) as a DataFrame for recipe evaluation"""
        data = {name: self.X[:, k] for k, name in enumerate(self.x_names)}
        data.update({name: self.D[:, k] for k, name in enumerate(self.d_names)})
        return pd.DataFrame(data)

    def subset(self, index):
        """Sample restricted to (possibly repeated) row positions"""
        index = np.asarray(index, dtype=int)
        return CombinedSample(
            y=self.y[index],
            X=self.X[index],
            D=self.D[index],
            in_A=self.in_A[index],
            weight_R=self.weight_R[index],
            N=self.N,
            x_names=self.x_names,
            d_names=self.d_names,
            offset=None if self.offset is None else self.offset[index],
            pi_R=None if self.pi_R is None else self.pi_R[index],
        )

    def with_outcome(self, y):
        """Copy with S_A outcomes replaced (full-length or S_A-length input)"""
        y = np.asarray(y, dtype=float)
        new_y = np.full(self.n_C, np.nan)
        new_y[self.in_A] = y[self.in_A] if y.shape == (self.n_C,) else y
        return replace(self, y=new_y)


@dataclass(frozen=True, eq=False)
class PostStrata:
    """Distinct reference-weight levels

    ``labels`` maps each S_R unit (in pooled order) to its level index.
    """

    values: np.ndarray
    counts: np.ndarray
    pi: np.ndarray
    labels: np.ndarray

    @property
    def J(self):
        return int(self.values.shape[0])

    @property
    def levels(self):
        return list(zip(self.values.tolist(), self.counts.tolist(), self.pi.tolist()))


def _flag(series, name):
    values = pd.to_numeric(series, errors="coerce")
    if values.isna().any():
        row = int(np.flatnonzero(values.isna().to_numpy())[0])
        raise ValidationError(f"membership flag '{name}' is not 0/1", row=row)
    values = values.to_numpy()
    bad = np.flatnonzero(~np.isin(values, (0, 1)))
    if bad.size:
        raise ValidationError(f"membership flag '{name}' is not 0/1", row=int(bad[0]))
    return values.astype(bool)


def sample_from_frame(df, schema, population_size=None):
    """Build a validated CombinedSample from a pooled DataFrame"""
    missing = [c for c in schema.required_columns() if c not in df.columns]
    if missing:
        raise ValidationError(f"missing column(s): {', '.join(missing)}")

    flag_A = _flag(df[schema.in_A], schema.in_A)
    flag_R = _flag(df[schema.in_R], schema.in_R)
    both = np.flatnonzero(flag_A & flag_R)
    if both.size:
        raise ValidationError("record flagged in both samples", row=int(both[0]))
    neither = np.flatnonzero(~flag_A & ~flag_R)
    if neither.size:
        raise ValidationError("record flagged in neither sample", row=int(neither[0]))

    def numeric(column):
        return pd.to_numeric(df[column], errors="coerce").to_numpy(dtype=float)

    weight = numeric(schema.weight)
    if population_size is None:
        population_size = int(round(np.nansum(np.where(flag_R, weight, np.nan))))
        logger.info("Population size not supplied; using weight total N=%d", population_size)

    return CombinedSample(
        y=numeric(schema.outcome),
        X=np.column_stack([numeric(c) for c in schema.x]),
        D=np.column_stack([numeric(c) for c in schema.d]) if schema.d else np.empty((len(df), 0)),
        in_A=flag_A,
        weight_R=weight,
        N=population_size,
        x_names=schema.x,
        d_names=schema.d,
        offset=numeric(schema.offset) if schema.offset else None,
        pi_R=numeric(schema.pi_R) if schema.pi_R else None,
    )


def load_combined(csv_path, schema, population_size=None):
    """Read a pooled CSV into a validated CombinedSample"""
    df = pd.read_csv(csv_path)
    sample = sample_from_frame(df, schema, population_size)
    logger.info("Loaded %s: n_A=%d n_R=%d N=%d", csv_path, sample.n_A, sample.n_R, sample.N)
    return sample


def sample_to_frame(sample, schema):
    """Inverse of sample_from_frame"""
    data = {
        schema.in_A: sample.in_A.astype(int),
        schema.in_R: sample.in_R.astype(int),
        schema.outcome: sample.y,
        schema.weight: sample.weight_R,
    }
    for k, name in enumerate(schema.x):
        data[name] = sample.X[:, k]
    for k, name in enumerate(schema.d):
        data[name] = sample.D[:, k]
    if schema.offset:
        data[schema.offset] = sample.offset
    if schema.pi_R:
        data[schema.pi_R] = sample.pi_R
    return pd.DataFrame(data)


def save_combined(sample, csv_path, schema):
    """Write a CombinedSample so that load_combined reproduces it"""
    sample_to_frame(sample, schema).to_csv(csv_path, index=False, float_format="%.17g")


def derive_post_strata(sample, weight_tolerance=0.0):
    """Group S_R weights into levels equal up to a relative tolerance"""
    if weight_tolerance < 0:
        raise ValueError("weight_tolerance must be nonnegative")
    w = sample.w_R
    n_R = w.shape[0]
    if n_R == 0:
        raise ValidationError("no reference units to post-stratify")

    order = np.argsort(w, kind="stable")
    sorted_w = w[order]

    # Sorted scan: a new level starts once a weight leaves the tolerance band of the level's first value
    level_of_sorted = np.empty(n_R, dtype=int)
    level = 0
    anchor = sorted_w[0]
    for k, value in enumerate(sorted_w):
        if value > anchor * (1.0 + weight_tolerance):
            level += 1
            anchor = value
        level_of_sorted[k] = level

    labels = np.empty(n_R, dtype=int)
    labels[order] = level_of_sorted
    J = level + 1
    counts = np.bincount(labels, minlength=J)
    values = np.bincount(labels, weights=w, minlength=J) / counts

    # Rescale so the S_R weights total N, then invert
    scale = sample.N / w.sum()
    pi = np.minimum(1.0, 1.0 / (values * scale))

    logger.debug("Derived %d post-strata from %d reference weights", J, n_R)
    return PostStrata(values=values, counts=counts, pi=pi, labels=labels)
