import os
import subprocess
import sys

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from edsl import kernels

BACKENDS = kernels.available_backends()
FUNCS = ("squared_value", "squared_value_grad", "logistic_value", "logistic_value_grad")


def test_compiled_backend_builds():
    # the extension is part of the normal install; the fallback exists for platforms
    # without a compiler
    assert "compiled" in BACKENDS
    assert kernels.BACKEND == "compiled" or os.environ.get("EDSL_PURE_PYTHON")


@pytest.mark.parametrize("name", ["compiled", "python"])
def test_fixed_order_dot(name):
    if name not in BACKENDS:
        pytest.skip("backend unavailable")
    k = kernels.load_backend(name)
    assert k.dot(np.array([1e8, 1.0]), np.array([1e8, -1.0])) == 1e16 - 1
    assert k.dot(np.zeros(0), np.zeros(0)) == 0.0


def _data(seed, n, p, classification):
    rng = np.random.default_rng(seed)
    X = np.ascontiguousarray(rng.standard_normal((n, p)) * 3)
    y = np.where(rng.random(n) < 0.5, 1.0, -1.0) if classification else rng.standard_normal(n)
    return X, y, rng.standard_normal(p)


@pytest.mark.skipif(len(BACKENDS) < 2, reason="needs both backends")
@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(1, 40), st.integers(1, 25))
def test_backends_agree(seed, n, p):
    comp, py = kernels.load_backend("compiled"), kernels.load_backend("python")
    for fn in FUNCS:
        X, y, beta = _data(seed, n, p, fn.startswith("logistic"))
        a, b = getattr(comp, fn)(X, y, beta), getattr(py, fn)(X, y, beta)
        if isinstance(a, tuple):
            assert abs(a[0] - b[0]) <= 1e-12 * max(1.0, abs(b[0]))
            assert np.max(np.abs(a[1] - b[1])) <= 1e-12 * max(1.0, np.max(np.abs(b[1])))
        else:
            assert abs(a - b) <= 1e-12 * max(1.0, abs(b))
    X, y, beta = _data(seed, n, p, False)
    assert np.max(np.abs(comp.matvec(X, beta) - py.matvec(X, beta))) <= 1e-12 * max(
        1.0, np.max(np.abs(X @ beta)))
    assert np.max(np.abs(comp.rmatvec(X, y) - py.rmatvec(X, y))) <= 1e-12 * max(
        1.0, np.max(np.abs(X.T @ y)))


def test_pure_python_switch():
    env = dict(os.environ, EDSL_PURE_PYTHON="1")
    out = subprocess.run([sys.executable, "-c", "import edsl.kernels as k; print(k.BACKEND)"],
                         env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "python"


def test_unknown_backend():
    with pytest.raises(ValueError):
        kernels.load_backend("fortran")
