import numpy as np
import pytest
from hypothesis import given, strategies as st

from delayfbsde import _kernels

pytestmark = pytest.mark.skipif(not _kernels.HAS_NUMBA, reason="numba not installed")

coef = st.floats(-0.5, 0.5)


@given(coef, coef, coef, coef, st.integers(2, 12), st.integers(0, 2 ** 32))
def test_euler_backends_agree(a0, a1, c0, c1, N, seed):
    rng = np.random.default_rng(seed)
    M = 5
    dZ = rng.normal(size=(M, N)) * 0.3
    steps = np.array([0, N // 2], dtype=np.int64)
    weights = np.array([0.4, 0.6])
    X1 = np.full((M, 2 * N + 1), 0.7)
    X2 = X1.copy()
    assert _kernels.euler_linear_numpy(X1, dZ, steps, weights, a0, a1, c0, c1, 1 / N) == -1
    assert _kernels.euler_linear_numba(X2, dZ, steps, weights, a0, a1, c0, c1, 1 / N) == -1
    assert np.allclose(X1, X2, rtol=1e-13, atol=1e-13)


@given(coef, coef, coef, st.integers(2, 12), st.integers(0, 2 ** 32))
def test_backward_backends_agree(k0, k1, k3, N, seed):
    rng = np.random.default_rng(seed)
    B = 3
    X = rng.normal(size=(B, 2 * N + 1))
    X[:, :N] = X[:, N:N + 1]
    steps = np.array([0, 1], dtype=np.int64)
    weights = np.array([0.5, 0.5])
    term = rng.normal(size=B)
    Ys, ns = [], []
    for fn in (_kernels.backward_linear_numpy, _kernels.backward_linear_numba):
        Y = np.repeat(term[:, None], 2 * N + 1, axis=1)
        gaps = np.zeros(200)
        ns.append(fn(X, Y, term, steps, weights, k0, k1, 0.0, k3, 1 / N, 1e-13, 200, gaps))
        Ys.append(Y)
    assert ns[0] == ns[1] < 200
    assert np.allclose(Ys[0], Ys[1], rtol=1e-12, atol=1e-12)


def test_blow_up_reported():
    X = np.ones((1, 9))
    dZ = np.zeros((1, 4))
    steps = np.array([0], dtype=np.int64)
    w = np.array([1.0])
    with np.errstate(over="ignore", invalid="ignore"):
        assert _kernels.euler_linear_numpy(X.copy(), dZ, steps, w, 1e308, 0, 0, 0, 10.0) == 0
        assert _kernels.euler_linear_numba(X.copy(), dZ, steps, w, 1e308, 0, 0, 0, 10.0) == 0


def test_backend_name():
    assert _kernels.backend() in ("numba", "numpy")


def test_env_flag_selects_numpy_backend():
    import os
    import subprocess
    import sys
    code = ("import numpy as np; from delayfbsde import backend, make_preset, make_grid, simulate_ensemble;"
            "g = make_grid(1.0, 16); c = make_preset('linear_delay', a0=0.1, a1=0.05, c0=0.5, c1=0.05);"
            "print(backend()); print(repr(float(simulate_ensemble(c, 0.3, g, 50, 1.0, 4).X.sum())))")
    env = dict(os.environ, DELAYFBSDE_DISABLE_NUMBA="1")
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
    name, total = out.stdout.split()
    assert name == "numpy"
    from delayfbsde import make_grid, make_preset, simulate_ensemble
    g = make_grid(1.0, 16)
    c = make_preset("linear_delay", a0=0.1, a1=0.05, c0=0.5, c1=0.05)
    assert abs(float(total) - float(simulate_ensemble(c, 0.3, g, 50, 1.0, 4).X.sum())) < 1e-10
