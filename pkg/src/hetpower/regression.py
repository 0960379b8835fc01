"""Ordinary least squares, prediction, correlation and PMU event selection."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from . import kernels
from .errors import (
    DegenerateDesign,
    LengthMismatch,
    MissingColumn,
    MissingRegressor,
    NoCandidates,
    NonFiniteInput,
)

#: singular values below ``RCOND * s_max`` of the equilibrated design are cut
RCOND = 1e-10
MIN_ROWS = 2


@dataclass(frozen=True)
class DesignMatrix:
    """Regressor matrix with a leading ``const`` column and power targets.

    ``row_index`` maps each row back to the position of its sample in the
    source trace; ``dropped`` counts samples that could not be expressed
    (e.g. a ratio over zero instructions).
    """

    column_names: tuple
    rows: np.ndarray
    targets: np.ndarray
    row_index: np.ndarray = None
    dropped: int = 0

    def __post_init__(self):
        if self.rows.ndim != 2 or self.rows.shape[1] != len(self.column_names):
            raise ValueError("rows width does not match column_names")
        if self.rows.shape[0] != self.targets.shape[0]:
            raise ValueError("rows and targets differ in length")
        if self.row_index is None:
            object.__setattr__(self, "row_index", np.arange(self.rows.shape[0]))

    @property
    def n_rows(self) -> int:
        return self.rows.shape[0]


@dataclass(frozen=True)
class CoefficientVector:
    names: tuple
    values: np.ndarray
    rank: int
    condition_estimate: float
    singular_values: np.ndarray = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        if len(self.names) != len(self.values):
            raise ValueError("names and values differ in length")

    def as_dict(self) -> dict:
        return dict(zip(self.names, (float(v) for v in self.values)))

    @property
    def full_rank(self) -> bool:
        return self.rank == len(self.names)


def fit_ols(design: DesignMatrix, min_rows: int = MIN_ROWS, rcond: float = RCOND) -> CoefficientVector:
    """Least-squares coefficients of ``design``.

    Columns are scaled to unit 2-norm before a thin SVD; singular values
    below ``rcond * s_max`` are discarded. For a full-rank design this is
    the usual ``(X^T X)^-1 X^T y`` solution. For a rank-deficient one it is
    the minimum-norm solution in the equilibrated coordinates, so constant
    columns that duplicate ``const`` share their weight evenly.
    """
    X = np.asarray(design.rows, dtype=np.float64)
    y = np.asarray(design.targets, dtype=np.float64)
    n, p = X.shape
    if n < min_rows:
        raise DegenerateDesign(f"{n} rows, at least {min_rows} required")
    if not (np.isfinite(X).all() and np.isfinite(y).all()):
        raise NonFiniteInput("design matrix or targets contain NaN/inf")

    scale = np.sqrt(np.einsum("ij,ij->j", X, X))
    scale[scale == 0] = 1.0
    U, s, Vt = np.linalg.svd(X / scale, full_matrices=False)
    keep = s > rcond * s[0] if s[0] > 0 else np.zeros_like(s, dtype=bool)
    rank = int(keep.sum())
    coef = Vt[keep].T @ ((U[:, keep].T @ y) / s[keep])
    beta = coef / scale
    cond = float(s[0] / s[-1]) if s[-1] > 0 else math.inf
    return CoefficientVector(tuple(design.column_names), beta, rank, cond, s)


def predict(coeffs: CoefficientVector, row: Mapping[str, float]) -> float:
    """``const + sum(beta_i * row[name_i])``; may be negative."""
    total = 0.0
    for name, beta in zip(coeffs.names, coeffs.values):
        if name == "const":
            total += float(beta)
            continue
        try:
            total += float(beta) * float(row[name])
        except KeyError:
            raise MissingRegressor(name) from None
    return total


def predict_rows(coeffs: CoefficientVector, design: DesignMatrix) -> np.ndarray:
    if tuple(design.column_names) != tuple(coeffs.names):
        raise ValueError("design columns do not match coefficient names")
    return design.rows @ coeffs.values


def sse(coeffs, design: DesignMatrix) -> float:
    values = coeffs.values if isinstance(coeffs, CoefficientVector) else np.asarray(coeffs)
    r = design.targets - design.rows @ values
    return float(r @ r)


def pearson(x: Sequence[float], y: Sequence[float]) -> float:
    """Sample Pearson correlation; NaN when either input is constant."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 1:
        raise LengthMismatch(f"shapes {x.shape} and {y.shape}")
    if x.shape[0] < 2:
        raise LengthMismatch("need at least two observations")
    return float(kernels.pearson_columns(x[:, None], y)[0])


def correlations(trace, candidates: Sequence[str]) -> dict:
    """|r| ranking input: Pearson r of each candidate column against power."""
    if not candidates:
        return {}
    X = np.column_stack([trace.column(c) for c in candidates])
    r = kernels.pearson_columns(X, trace.targets)
    return {c: float(v) for c, v in zip(candidates, r)}


def rank_candidates(corr: Mapping[str, float]) -> list:
    """Names ordered by |r| descending, ties by name, undefined last."""
    def key(name):
        r = corr[name]
        if math.isnan(r):
            return (1, 0.0, name)
        return (0, -abs(r), name)

    return sorted(corr, key=key)


def select_pmu_events(trace, candidates: Sequence[str], slots: int = 5) -> list:
    """``cycles`` followed by the ``slots - 1`` candidates best correlated with power.

    Candidates that the trace does not carry on every record are ignored.
    """
    if slots < 1:
        raise ValueError("slots must be >= 1")
    if not trace.has_column("cycles"):
        raise MissingColumn("cycles")
    pool = [c for c in dict.fromkeys(candidates) if c != "cycles"]
    if not pool:
        raise NoCandidates("no candidate counters given")
    usable = [c for c in pool if trace.has_column(c)]
    if not usable:
        raise NoCandidates(f"none of {pool} present in trace")
    ranked = rank_candidates(correlations(trace, usable))
    return ["cycles", *ranked[: slots - 1]]
