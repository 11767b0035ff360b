import math
import warnings

import numpy as np
import pytest
from hypothesis import given, strategies as st

import oracles
from delayfbsde.asymptotics import (DeviationEstimate, cauchy_rate, conditional_variation, crossing_probability,
                                    deviation_probabilities, deviation_probability, exceedances, fit_power,
                                    moment_bounds, uniform_partition)
from delayfbsde.backward import solve_bsde
from delayfbsde.coefficients import make_preset
from delayfbsde.core import make_grid
from delayfbsde.forward import simulate_ensemble
from delayfbsde.noise import brownian_increments

DELAY = dict(a0=0.1, a1=0.05, c0=0.5, c1=0.05, k0=0.05, k1=0.05, k2=0.02, k3=0.05, g0=1.0, G=0.1, tau=0.5)


@pytest.fixture(autouse=True)
def _quiet():
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        yield


def test_moment_bounds_zero_and_scaling():
    g = make_grid(1.0, 16)
    z = moment_bounds(make_preset("zero"), 0.5, g, 200, 2.0)
    assert z.sup_X2 == pytest.approx(4.0) and z.int_Z2 == 0.0
    assert z.per_statistic["X"] == pytest.approx(4.0 / 5.0)
    with pytest.raises(ValueError):
        moment_bounds(make_preset("zero"), 0.5, g, 50, 0.0)


def test_pure_noise_cauchy_factorizes_exactly():
    g = make_grid(1.0, 16)
    c = make_preset("pure_noise")
    dW = brownian_increments(1, 2000, g)
    ratios = [cauchy_rate(c, e1, e2, g, 2000, dW=dW).implied_constants["X"]
              for e1, e2 in [(0.8, 0.4), (0.4, 0.2), (0.2, 0.1)]]
    assert np.allclose(ratios, oracles.expected_sup_sq(dW), rtol=1e-12)


def test_cauchy_rate_validation_and_equal_pair():
    g = make_grid(1.0, 8)
    c = make_preset("zero")
    with pytest.raises(ValueError):
        cauchy_rate(c, 0.2, 0.4, g, 100)
    rep = cauchy_rate(c, 0.3, 0.3, g, 100)
    assert math.isnan(rep.implied_constants["X"])
    assert rep.half_widths["X"] == 0.0


def test_wilson_interval():
    est = DeviationEstimate(0.1, 0.5, 30, 100)
    lo, hi = est.ci
    assert lo < 0.3 < hi
    assert est.half_width == pytest.approx(0.5 * (hi - lo))
    assert DeviationEstimate(0.1, 0.5, 0, 100).ci[0] == 0.0


def test_crossing_probability_limits():
    dev = np.array([[0.0, 0.0]])
    vol = np.array([[1.0]])
    assert crossing_probability(dev, vol, 1.0, 1e-8)[0] < 1e-12
    assert crossing_probability(np.array([[0.0, 2.0]]), vol, 1.0, 1.0)[0] == 1.0
    assert crossing_probability(dev, np.zeros((1, 1)), 1.0, 1.0)[0] == 0.0
    # one-step bridge pinned at 0: P(max |B| >= d) ~ 2 exp(-2 d^2 / v^2)
    assert crossing_probability(dev, vol, 2.0, 1.0)[0] == pytest.approx(2 * math.exp(-8.0))


@given(st.integers(0, 1000))
def test_exceedances_nested_in_delta(seed):
    rng = np.random.default_rng(seed)
    dev = np.cumsum(rng.normal(size=(200, 9)) * 0.3, axis=1)
    vol = np.full((200, 8), 0.3)
    u = rng.random(200)
    c = exceedances(dev, vol, [0.2, 0.5, 1.0, 2.0], 1.0, u)
    assert c == sorted(c, reverse=True)
    d = exceedances(dev, None, [0.2, 0.5, 1.0, 2.0], 1.0, None)
    assert all(a >= b for a, b in zip(c, d))


def test_pure_noise_matches_reflection_oracle():
    g = make_grid(1.0, 32)
    c = make_preset("pure_noise")
    for eps in (0.25, 0.5):
        est = deviation_probability(c, eps, 0.5, g, 40_000, seed=2)
        ref = oracles.two_sided_exit_images(0.5 / math.sqrt(eps))
        assert abs(est.p_hat - ref) <= 3 * est.half_width


def test_deviation_for_Y_and_validation():
    g = make_grid(1.0, 16)
    c = make_preset("pure_noise")
    ests = deviation_probabilities(c, 0.25, [0.5, 1.0], g, 5000, seed=1, component="Y")
    assert ests[0].p_hat >= ests[1].p_hat
    assert ests[0].component == "Y"
    with pytest.raises(ValueError):
        deviation_probabilities(c, 0.25, [0.0], g, 10)
    with pytest.raises(ValueError):
        deviation_probabilities(c, 0.25, [1.0], g, 10, component="Z")


def test_fit_power():
    eps = np.array([0.5, 0.25, 0.125])
    slope, C = fit_power(eps, 3 * eps ** 2, 10 ** 6)
    assert slope == pytest.approx(2.0) and C == pytest.approx(3.0)
    s0, _ = fit_power(eps, [0.1, 0.0, 0.0], 100)
    assert math.isfinite(s0)


def test_partition_helpers():
    g = make_grid(1.0, 32)
    assert uniform_partition(g, 8)[:3] == [0, 4, 8]
    with pytest.raises(ValueError):
        uniform_partition(g, 5)


def test_conditional_variation_constant_terminal():
    g = make_grid(1.0, 32)
    c = make_preset("linear", g0=1.7)
    ens = simulate_ensemble(c, 0.3, g, 500, 0.0, 1)
    sol = solve_bsde(c, ens)
    for n in (8, 32):
        rep = conditional_variation(sol.Y, ens.X, c, uniform_partition(g, n), g)
        assert abs(rep.V_hat - 1.7) <= max(3 * rep.se, 1e-12)
    times = conditional_variation(sol.Y, ens.X, c, [0.0, 0.5, 1.0], g)
    assert times.partition == [0.0, 0.5, 1.0]
    with pytest.raises(ValueError):
        conditional_variation(sol.Y, ens.X, c, [0.0, 0.3, 1.0], g)


def test_conditional_variation_refinement_stable():
    g = make_grid(1.0, 32)
    c = make_preset("linear_delay", **DELAY)
    ens = simulate_ensemble(c, 0.2, g, 2000, 1.0, 1)
    sol = solve_bsde(c, ens)
    v8 = conditional_variation(sol.Y, ens.X, c, uniform_partition(g, 8), g).V_hat
    v32 = conditional_variation(sol.Y, ens.X, c, uniform_partition(g, 32), g).V_hat
    assert 0.5 < v32 / v8 < 2.0
