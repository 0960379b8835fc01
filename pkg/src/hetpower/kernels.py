"""Hot numeric kernels with a numba path and a pure-numpy path.

The numba path is used when numba is importable and the environment
variable ``HETPOWER_DISABLE_NUMBA`` is unset (or ``0``). Both paths are
always importable as :data:`numpy_impl` and :data:`numba_impl` so tests
and the benchmark script can compare them directly.

Kernels
-------
pearson_columns(X, y)
    Sample Pearson coefficient of every column of ``X`` against ``y``.
    Constant columns (or constant ``y``) give NaN.
percent_errors(measured, predicted)
    ``100 * |measured - max(predicted, 0)| / measured`` element-wise.
group_sums(codes, values, n_groups)
    Per-group column sums and counts for integer group codes.
"""

import os
from types import SimpleNamespace

import numpy as np

try:
    import numba
except ImportError:  # pragma: no cover - exercised only without numba
    numba = None

NUMBA_AVAILABLE = numba is not None
NUMBA_DISABLED = os.environ.get("HETPOWER_DISABLE_NUMBA", "0") not in ("", "0")


# -- pure numpy ---------------------------------------------------------------

def _np_pearson_columns(X, y):
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    out = np.full(X.shape[1], np.nan)
    if y.min() == y.max():
        return out
    dy = y - y.mean()
    syy = dy @ dy
    const = X.min(axis=0) == X.max(axis=0)
    dX = X - X.mean(axis=0)
    sxx = np.einsum("ij,ij->j", dX, dX)
    sxy = dX.T @ dy
    live = ~const
    r = sxy[live] / np.sqrt(sxx[live] * syy)
    out[live] = np.clip(r, -1.0, 1.0)
    return out


def _np_percent_errors(measured, predicted):
    measured = np.asarray(measured, dtype=np.float64)
    clamped = np.maximum(np.asarray(predicted, dtype=np.float64), 0.0)
    return 100.0 * np.abs(measured - clamped) / measured


def _np_group_sums(codes, values, n_groups):
    codes = np.asarray(codes, dtype=np.int64)
    values = np.asarray(values, dtype=np.float64)
    sums = np.zeros((n_groups, values.shape[1]))
    np.add.at(sums, codes, values)
    counts = np.bincount(codes, minlength=n_groups).astype(np.int64)
    return sums, counts


# -- loop versions (compiled by numba when available) -------------------------

def _loop_pearson_columns(X, y):
    n, k = X.shape
    out = np.empty(k)
    ymin = y[0]
    ymax = y[0]
    ysum = 0.0
    for i in range(n):
        ysum += y[i]
        if y[i] < ymin:
            ymin = y[i]
        if y[i] > ymax:
            ymax = y[i]
    ymean = ysum / n
    syy = 0.0
    for i in range(n):
        d = y[i] - ymean
        syy += d * d
    for j in range(k):
        xmin = X[0, j]
        xmax = X[0, j]
        xsum = 0.0
        for i in range(n):
            v = X[i, j]
            xsum += v
            if v < xmin:
                xmin = v
            if v > xmax:
                xmax = v
        if xmin == xmax or ymin == ymax:
            out[j] = np.nan
            continue
        xmean = xsum / n
        sxx = 0.0
        sxy = 0.0
        for i in range(n):
            dx = X[i, j] - xmean
            sxx += dx * dx
            sxy += dx * (y[i] - ymean)
        r = sxy / np.sqrt(sxx * syy)
        if r > 1.0:
            r = 1.0
        elif r < -1.0:
            r = -1.0
        out[j] = r
    return out


def _loop_percent_errors(measured, predicted):
    n = measured.shape[0]
    out = np.empty(n)
    for i in range(n):
        p = predicted[i]
        if p < 0.0:
            p = 0.0
        out[i] = 100.0 * abs(measured[i] - p) / measured[i]
    return out


def _loop_group_sums(codes, values, n_groups):
    n, k = values.shape
    sums = np.zeros((n_groups, k))
    counts = np.zeros(n_groups, dtype=np.int64)
    for i in range(n):
        g = codes[i]
        counts[g] += 1
        for j in range(k):
            sums[g, j] += values[i, j]
    return sums, counts


numpy_impl = SimpleNamespace(
    name="numpy",
    pearson_columns=_np_pearson_columns,
    percent_errors=_np_percent_errors,
    group_sums=_np_group_sums,
)

if NUMBA_AVAILABLE:
    _jit = numba.njit(cache=False, nogil=True)
    _nb_pearson = _jit(_loop_pearson_columns)
    _nb_percent = _jit(_loop_percent_errors)
    _nb_group = _jit(_loop_group_sums)

    def _nb_pearson_columns(X, y):
        X = np.ascontiguousarray(X, dtype=np.float64)
        y = np.ascontiguousarray(y, dtype=np.float64)
        if X.shape[0] == 0:
            return np.full(X.shape[1], np.nan)
        return _nb_pearson(X, y)

    def _nb_percent_errors(measured, predicted):
        return _nb_percent(
            np.ascontiguousarray(measured, dtype=np.float64),
            np.ascontiguousarray(predicted, dtype=np.float64),
        )

    def _nb_group_sums(codes, values, n_groups):
        return _nb_group(
            np.ascontiguousarray(codes, dtype=np.int64),
            np.ascontiguousarray(values, dtype=np.float64),
            int(n_groups),
        )

    numba_impl = SimpleNamespace(
        name="numba",
        pearson_columns=_nb_pearson_columns,
        percent_errors=_nb_percent_errors,
        group_sums=_nb_group_sums,
    )
else:  # pragma: no cover
    numba_impl = None

active = numba_impl if (numba_impl is not None and not NUMBA_DISABLED) else numpy_impl

pearson_columns = active.pearson_columns
percent_errors = active.percent_errors
group_sums = active.group_sums
BACKEND = active.name
