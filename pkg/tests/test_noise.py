import numpy as np
from hypothesis import given, strategies as st

from delayfbsde.core import make_grid
from delayfbsde.noise import NoiseSource, auxiliary_uniforms, brownian_increments


@given(st.integers(0, 2 ** 64 - 1), st.integers(1, 40), st.integers(1, 6))
def test_rows_match_per_path_source(seed, M, threads):
    g = make_grid(1.0, 8)
    dW = brownian_increments(seed, M, g, threads)
    for p in (0, M - 1):
        assert np.array_equal(dW[p], NoiseSource(seed, p).increments(g))
    assert np.array_equal(dW, brownian_increments(seed, M, g, 1))


def test_prefix_stability_and_independence():
    g = make_grid(1.0, 16)
    a = brownian_increments(3, 50, g)
    b = brownian_increments(3, 80, g)
    assert np.array_equal(a, b[:50])
    assert not np.array_equal(a, brownian_increments(4, 50, g))


def test_increment_variance():
    g = make_grid(2.0, 4)
    dW = brownian_increments(0, 20000, g)
    assert abs(dW.var() - g.dt) < 0.03 * g.dt
    assert abs(dW.mean()) < 0.01


def test_auxiliary_stream():
    u = auxiliary_uniforms(5, 1000, threads=3)
    assert np.array_equal(u, auxiliary_uniforms(5, 1000))
    assert u[7] == NoiseSource(5, 7).uniform()
    assert np.all((u >= 0) & (u < 1))
    g = make_grid(1.0, 4)
    # distinct from the increment stream
    z = NoiseSource(5, 7).increments(g)
    assert not np.any(np.isclose(z, u[7]))
