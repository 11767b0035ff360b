import math
import warnings

import numpy as np
import pytest
from hypothesis import given, strategies as st

import oracles
from delayfbsde.backward import deterministic_backward
from delayfbsde.coefficients import make_preset
from delayfbsde.core import ZERO, FullPath, make_grid
from delayfbsde.forward import deterministic_forward
from delayfbsde.ldp import (ActionProblem, ControlPath, ExceedanceTarget, PathTarget, TerminalTarget,
                            ldp_slope_check, rate_I1, rate_I2, skeleton_F)

DELAY = dict(a0=0.1, a1=0.05, c0=0.5, c1=0.05, k0=0.05, k1=0.05, k2=0.02, k3=0.05, g0=1.0, G=0.1, tau=0.5)
G32 = make_grid(1.0, 32)


def line(grid, x, v):
    return FullPath.from_forward(grid, x + v * grid.nodes)


def test_control_path():
    psi = ControlPath(G32, np.full(32, 2.0))
    assert len(psi.values) == 33
    assert psi.energy == pytest.approx(2.0)
    with pytest.raises(ValueError):
        ControlPath(G32, np.ones(5))
    with pytest.raises(ValueError):
        ControlPath(G32, np.r_[np.ones(32), np.inf])


def test_rate_I1_straight_line():
    c = make_preset("pure_noise")
    assert rate_I1(line(G32, 0.3, 2.0), c) == pytest.approx(2.0, abs=1e-12)


def test_rate_I1_skeleton_is_zero():
    c = make_preset("linear_delay", **DELAY)
    assert rate_I1(deterministic_forward(c, G32, 1.0), c) == 0.0


def test_rate_I1_infinite_without_noise():
    c = make_preset("linear", a0=0.2)
    assert rate_I1(line(G32, 1.0, 1.0), c) == math.inf
    assert rate_I1(deterministic_forward(c, G32, 1.0), c) == 0.0


def test_rate_I1_history_check():
    vals = np.r_[np.ones(32), np.zeros(33)]
    with pytest.raises(ValueError):
        rate_I1(FullPath(G32, vals, ZERO), make_preset("pure_noise"))


def test_point_form_differs_under_delay():
    c = make_preset("linear_delay", a1=1.0, c0=1.0, w0=0.0, tau=0.5)
    phi = line(G32, 0.0, 1.0)
    assert rate_I1(phi, c) != pytest.approx(rate_I1(phi, c, point_form=True))


@given(st.lists(st.floats(-2, 2), min_size=16, max_size=16),
       st.sampled_from(["pure_noise", "linear_delay"]))
def test_I1_of_controlled_path_is_control_energy(vals, name):
    g = make_grid(1.0, 16)
    c = make_preset(name, **(DELAY if name == "linear_delay" else {}))
    psi = ControlPath(g, np.array(vals))
    pair = skeleton_F(psi, c, g, 0.5)
    assert rate_I1(pair.X, c) <= psi.energy + 1e-9
    assert rate_I1(pair.X, c) == pytest.approx(psi.energy, rel=1e-8, abs=1e-10)
    steps, w = c.probes(g)
    assert pair.Y.forward[-1] == pytest.approx(c.params.g0 + c.params.G * pair.X.forward[-1])


def test_skeleton_examples():
    c = make_preset("pure_noise")
    pair = skeleton_F(ControlPath.constant(G32, 0.7), c, G32, 0.2)
    assert np.allclose(pair.X.forward, 0.2 + 0.7 * G32.nodes)
    assert np.allclose(pair.Y.forward, 0.2 + 0.7)
    d = make_preset("linear_delay", **DELAY)
    z = skeleton_F(ControlPath.constant(G32, 0.0), d, G32, 1.0)
    X0 = deterministic_forward(d, G32, 1.0)
    assert np.array_equal(z.X.values, X0.values)
    assert np.array_equal(z.Y.values, deterministic_backward(d, X0).values)


def test_rate_I2_terminal_shift_against_bruteforce():
    c = make_preset("pure_noise")
    r = rate_I2(ActionProblem(c, TerminalTarget(1.0), 0.0), G32)
    ref = oracles.terminal_shift_bruteforce(1.0, N=32)
    assert ref == pytest.approx(0.5, abs=1e-9)
    assert r.converged
    assert abs(r.I2 - ref) <= 0.1 * ref
    assert np.allclose(r.psi.values[:-1], 1.0, atol=0.05)
    assert r.residual <= 1e-3


def test_rate_I2_path_target_skeleton():
    c = make_preset("linear_delay", **DELAY)
    Y0 = deterministic_backward(c, deterministic_forward(c, G32, 1.0))
    r = rate_I2(ActionProblem(c, PathTarget(Y0), 1.0), G32)
    assert r.I2 == 0.0 and r.residual == 0.0
    assert np.all(r.psi.values == 0.0)


def test_rate_I2_unreachable_is_flagged():
    c = make_preset("linear", g0=1.0)
    r = rate_I2(ActionProblem(c, TerminalTarget(5.0), 0.0), make_grid(1.0, 8), budget=20)
    assert not r.converged
    assert r.residual == pytest.approx(4.0)


def test_rate_I2_monotone_and_below_feasible_I1():
    g = make_grid(1.0, 16)
    c = make_preset("linear_delay", **DELAY)
    Y0 = deterministic_backward(c, deterministic_forward(c, g, 1.0))
    target = ExceedanceTarget(Y0.forward.copy(), 0.2, 1.0)
    r = rate_I2(ActionProblem(c, target, 1.0), g)
    for cand in r.candidates:
        for _, hist in cand.history:
            assert all(b <= a for a, b in zip(hist, hist[1:]))
    assert r.converged
    assert r.I2 <= min(r.feasible_energies) + 1e-15
    X = skeleton_F(r.psi, c, g, 1.0).X
    assert rate_I1(X, c) == pytest.approx(r.I2, rel=1e-8)


def test_action_problem_validation():
    c = make_preset("zero")
    with pytest.raises(ValueError):
        ActionProblem(c, TerminalTarget(0.0), 0.0, rho=0.0)


def test_ldp_slope_check_pure_noise():
    c = make_preset("pure_noise")
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        rep = ldp_slope_check(c, 1.0, [0.5, 0.25, 0.125], 20_000, G32, seed=3)
    assert rep.I2_star == pytest.approx(0.5, rel=0.05)
    assert -0.75 < rep.slope < -0.35
    assert rep.fitted and not rep.dropped_eps
    assert len(rep.records()) == 3
    with pytest.raises(ValueError):
        ldp_slope_check(c, 1.0, [0.25, 0.5], 100, G32)
