import os
import subprocess
import sys

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hetpower import kernels

needs_numba = pytest.mark.skipif(kernels.numba_impl is None, reason="numba not installed")


@st.composite
def matrix(draw):
    n = draw(st.integers(2, 40))
    k = draw(st.integers(1, 6))
    seed = draw(st.integers(0, 2**32 - 1))
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(n, k)) * rng.uniform(0.1, 1e4, size=k)
    if draw(st.booleans()):
        X[:, 0] = 3.5  # constant column
    return X, rng.normal(size=n)


@needs_numba
@settings(max_examples=100, deadline=None)
@given(matrix())
def test_pearson_parity(prob):
    X, y = prob
    a = kernels.numpy_impl.pearson_columns(X, y)
    b = kernels.numba_impl.pearson_columns(X, y)
    assert np.array_equal(np.isnan(a), np.isnan(b))
    ok = ~np.isnan(a)
    assert np.allclose(a[ok], b[ok], rtol=0, atol=1e-12)


@needs_numba
@settings(max_examples=100, deadline=None)
@given(st.lists(st.tuples(st.floats(0.01, 100), st.floats(-100, 100)), min_size=1, max_size=50))
def test_percent_error_parity(pairs):
    m, p = np.array(pairs).T
    a = kernels.numpy_impl.percent_errors(m, p)
    b = kernels.numba_impl.percent_errors(m, p)
    assert np.array_equal(a, b)


@needs_numba
@settings(max_examples=100, deadline=None)
@given(st.integers(1, 8), st.integers(0, 2**32 - 1))
def test_group_sum_parity(groups, seed):
    rng = np.random.default_rng(seed)
    codes = rng.integers(0, groups, size=60)
    values = rng.normal(size=(60, 3))
    sa, ca = kernels.numpy_impl.group_sums(codes, values, groups)
    sb, cb = kernels.numba_impl.group_sums(codes, values, groups)
    assert np.array_equal(ca, cb)
    assert np.allclose(sa, sb, rtol=1e-12, atol=1e-12)
    # counts match a direct tally
    assert ca.tolist() == [int((codes == g).sum()) for g in range(groups)]


def test_percent_error_clamps_negative():
    out = kernels.percent_errors(np.array([2.0, 2.0]), np.array([-1.0, 1.0]))
    assert out.tolist() == [100.0, 50.0]


@pytest.mark.parametrize("flag,expected", [("1", "numpy"), ("0", None)])
def test_env_flag_selects_backend(flag, expected):
    env = {**os.environ, "HETPOWER_DISABLE_NUMBA": flag}
    out = subprocess.run([sys.executable, "-c", "from hetpower import kernels; print(kernels.BACKEND)"],
                         env=env, capture_output=True, text=True, check=True).stdout.strip()
    if expected is None:
        expected = "numba" if kernels.NUMBA_AVAILABLE else "numpy"
    assert out == expected
