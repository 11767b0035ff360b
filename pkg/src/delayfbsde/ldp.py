"""Freidlin-Wentzell rate functions for the forward and backward families.

The forward rate is the control energy 1/2 int psi^2 needed to steer the
skeleton along a path; the backward rate is pushed forward through the map
psi -> Y^psi (deterministic backward equation along the controlled forward
path) and computed by penalized action minimization.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .asymptotics import DeviationEstimate, deviation_probabilities
from .backward import deterministic_backward, deterministic_backward_batch
from .coefficients import CoefficientSet, SegmentView
from .core import CONSTANT_INITIAL, FullPath, TimeGrid
from .forward import deterministic_forward, euler_paths, segment_view

SIGMA_ZERO_TOL = 1e-9


@dataclass(frozen=True)
class ControlPath:
    """Control values on the N+1 nodes of [0, T]; psi_N does not act on the dynamics."""

    grid: TimeGrid
    values: np.ndarray

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        if v.shape == (self.grid.N,):
            v = np.append(v, 0.0)
        if v.shape != (self.grid.N + 1,):
            raise ValueError(f"control needs {self.grid.N + 1} node values, got shape {v.shape}")
        if not np.all(np.isfinite(v)):
            raise ValueError("control must be finite")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @classmethod
    def constant(cls, grid: TimeGrid, value: float) -> ControlPath:
        return cls(grid, np.full(grid.N + 1, float(value)))

    @property
    def energy(self) -> float:
        """1/2 sum psi_i^2 dt over the N steps."""
        return 0.5 * float(np.sum(self.values[:-1] ** 2)) * self.grid.dt


def _energy(psi: np.ndarray, dt: float) -> np.ndarray:
    return 0.5 * np.sum(psi ** 2, axis=-1) * dt


def implied_control(phi: FullPath, coeffs: CoefficientSet, grid: TimeGrid | None = None,
                    point_form: bool = False) -> np.ndarray:
    """psi_i = (phi'(t_i) - b(t_i, phi_{t_i})) / sigma(t_i, phi_{t_i}) with forward differences.

    Steps where sigma vanishes get 0 if the drift matches and +inf otherwise.
    A step that the uncontrolled Euler update reproduces bit for bit gets 0,
    so skeleton paths have rate exactly 0.
    ``point_form`` evaluates the coefficients on the constant segment phi(t_i)
    instead of the delayed segment.
    """
    grid = grid or phi.grid
    N, dt = grid.N, grid.dt
    v = phi.values
    if np.any(v[:N] != v[N]):
        raise ValueError("rate function paths must equal x on [-T, 0]")
    steps, weights = coeffs.probes(grid)
    X = v[None, :]
    psi = np.empty(N)
    for i in range(N):
        k = N + i
        if point_form:
            seg = SegmentView(np.full((1, len(steps)), v[k]), weights)
        else:
            seg = segment_view(X, k, steps, weights)
        t = i * dt
        drift = coeffs.b(t, seg)[0]
        sig = coeffs.sigma(t, seg)[0]
        num = (v[k + 1] - v[k]) / dt - drift
        if v[k] + drift * dt + sig * 0.0 == v[k + 1]:
            # the uncontrolled Euler step reproduces the node exactly
            psi[i] = 0.0
        elif sig != 0:
            psi[i] = num / sig
        else:
            psi[i] = 0.0 if abs(num) <= SIGMA_ZERO_TOL else math.inf
    return psi


def rate_I1(phi: FullPath, coeffs: CoefficientSet, grid: TimeGrid | None = None,
            point_form: bool = False) -> float:
    """Forward rate: energy of the control steering the skeleton along ``phi``; +inf if none exists."""
    grid = grid or phi.grid
    psi = implied_control(phi, coeffs, grid, point_form)
    if not np.all(np.isfinite(psi)):
        return math.inf
    return float(_energy(psi, grid.dt))


@dataclass
class SkeletonPair:
    X: FullPath
    Y: FullPath


def skeleton_batch(psi: np.ndarray, coeffs: CoefficientSet, grid: TimeGrid, x: float,
                   tol: float = 1e-12, max_iter: int = 500) -> tuple[np.ndarray, np.ndarray]:
    """Controlled forward paths and their backward images for each row of ``psi`` (B, >=N)."""
    psi = np.atleast_2d(np.asarray(psi, dtype=float))[:, :grid.N]
    X = euler_paths(coeffs, grid, x, psi * grid.dt)
    Y, _ = deterministic_backward_batch(coeffs, X, grid, tol, max_iter)
    return X, Y


def skeleton_F(psi: ControlPath, coeffs: CoefficientSet, grid: TimeGrid, x: float) -> SkeletonPair:
    """X^psi' = b + sigma psi, then Y^psi from the backward equation with Z = 0."""
    X, Y = skeleton_batch(psi.values[None, :], coeffs, grid, x)
    return SkeletonPair(FullPath(grid, X[0], CONSTANT_INITIAL), FullPath(grid, Y[0], CONSTANT_INITIAL))


# ---------------------------------------------------------------- targets

@dataclass(frozen=True)
class TerminalTarget:
    """Y^psi(time) = value within ``tol``."""

    value: float
    tol: float = 0.0
    time: float = 0.0

    def residual(self, Y: np.ndarray, grid: TimeGrid) -> np.ndarray:
        k = grid.index(self.time)
        return np.maximum(0.0, np.abs(Y[:, k] - self.value) - self.tol)


@dataclass(frozen=True)
class PathTarget:
    """Y^psi = path on [0, T] (sup norm)."""

    path: FullPath

    def residual(self, Y: np.ndarray, grid: TimeGrid) -> np.ndarray:
        return np.max(np.abs(Y[:, grid.N:] - self.path.forward), axis=1)


@dataclass(frozen=True)
class ExceedanceTarget:
    """sign * (Y^psi(s) - reference(s)) >= level for some s in [0, T]."""

    reference: np.ndarray
    level: float
    sign: float = 1.0

    def residual(self, Y: np.ndarray, grid: TimeGrid) -> np.ndarray:
        reach = np.max(self.sign * (Y[:, grid.N:] - self.reference), axis=1)
        return np.maximum(0.0, self.level - reach)


@dataclass
class ActionProblem:
    coeffs: CoefficientSet
    target: object
    x: float
    rho: float = 1e3
    residual_tol: float = 1e-3

    def __post_init__(self):
        if not self.rho > 0:
            raise ValueError("penalty weight must be positive")
        if self.residual_tol < 0:
            raise ValueError("residual tolerance must be non-negative")


@dataclass
class Candidate:
    start: int
    psi: np.ndarray
    energy: float
    residual: float
    J: float
    rho: float
    history: list = field(default_factory=list)


@dataclass
class RateI2Result:
    I2: float
    psi: ControlPath
    residual: float
    converged: bool
    rho: float
    candidates: list
    feasible_energies: list

    def record(self) -> dict:
        return {"I2": self.I2, "residual": self.residual, "converged": self.converged,
                "psi": self.psi.values.tolist()}


class _Objective:
    def __init__(self, problem: ActionProblem, grid: TimeGrid):
        self.p = problem
        self.grid = grid

    def parts(self, psi: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        _, Y = skeleton_batch(psi, self.p.coeffs, self.grid, self.p.x)
        return _energy(psi, self.grid.dt), self.p.target.residual(Y, self.grid)

    def J(self, psi, rho):
        e, r = self.parts(psi)
        return e + rho * r ** 2, e, r

    def gradient(self, psi, rho):
        """Central differences, all 2N perturbations in one batch."""
        n = psi.shape[0]
        h = 1e-5 * np.maximum(1.0, np.abs(psi))
        pert = np.repeat(psi[None, :], 2 * n, axis=0)
        pert[np.arange(n), np.arange(n)] += h
        pert[n + np.arange(n), np.arange(n)] -= h
        Jp, _, _ = self.J(pert, rho)
        return (Jp[:n] - Jp[n:]) / (2 * h)


def _descend(obj: _Objective, psi: np.ndarray, rho: float, budget: int, tracker) -> tuple[np.ndarray, list]:
    """Quasi-Newton descent with backtracking (halving up to 30 times); J never increases."""
    dt = obj.grid.dt
    n = psi.shape[0]
    J, e, r = (v[0] for v in obj.J(psi[None, :], rho))
    tracker(psi, e, r)
    history = [J]
    if J == 0.0:
        return psi, history
    H = np.eye(n) / dt
    grad = obj.gradient(psi, rho)
    for _ in range(budget):
        if not np.all(np.isfinite(grad)) or np.max(np.abs(grad)) <= 1e-14:
            break
        d = -H @ grad
        slope = float(grad @ d)
        if slope >= 0:
            H = np.eye(n) / dt
            d = -H @ grad
            slope = float(grad @ d)
        step = 1.0
        for _ in range(31):
            trial = psi + step * d
            Jt, et, rt = (v[0] for v in obj.J(trial[None, :], rho))
            if Jt <= J + 1e-4 * step * slope:
                break
            step *= 0.5
        else:
            break
        if not Jt < J:
            break
        new_grad = obj.gradient(trial, rho)
        s, y = trial - psi, new_grad - grad
        sy = float(s @ y)
        if sy > 1e-16:
            rho_k = 1.0 / sy
            V = np.eye(n) - rho_k * np.outer(s, y)
            H = V @ H @ V.T + rho_k * np.outer(s, s)
        decrease = J - Jt
        psi, grad, J = trial, new_grad, Jt
        tracker(psi, et, rt)
        history.append(J)
        if decrease <= 1e-14 * max(1.0, J):
            break
    return psi, history


def rate_I2(problem: ActionProblem, grid: TimeGrid, budget: int = 200, ramp: float = 1.0,
            escalations: int = 3) -> RateI2Result:
    """Minimize 1/2 sum psi^2 dt + rho * residual^2 from the starts {0, +ramp, -ramp}.

    The penalty is multiplied by 10 (at most ``escalations`` times) while the
    constraint residual stays above ``problem.residual_tol``. The estimate is the
    smallest energy among all feasible accepted iterates; if none is feasible
    the result is flagged unconverged and carries the minimum-J candidate.
    """
    obj = _Objective(problem, grid)
    N = grid.N
    starts = [np.zeros(N), np.full(N, float(ramp)), np.full(N, -float(ramp))]
    feasible: list[tuple[float, int, np.ndarray, float]] = []
    candidates = []
    rho_final = problem.rho
    for s_idx, psi in enumerate(starts):
        def tracker(p, e, r, s_idx=s_idx):
            if r <= problem.residual_tol:
                feasible.append((float(e), s_idx, p.copy(), float(r)))

        rho = problem.rho
        history = []
        for level in range(escalations + 1):
            psi, h = _descend(obj, psi, rho, budget, tracker)
            history.append((rho, h))
            _, r = obj.parts(psi[None, :])
            if r[0] <= problem.residual_tol or level == escalations:
                break
            rho *= 10.0
        rho_final = max(rho_final, rho)
        e, r = obj.parts(psi[None, :])
        candidates.append(Candidate(s_idx, psi, float(e[0]), float(r[0]), 0.0, rho, history))
    for c in candidates:
        c.J = c.energy + rho_final * c.residual ** 2
    if feasible:
        e, _, psi, r = min(feasible, key=lambda t: (t[0], t[1]))
        converged = True
    else:
        best = min(candidates, key=lambda c: (c.J, c.start))
        e, psi, r, converged = best.energy, best.psi, best.residual, False
    return RateI2Result(e, ControlPath(grid, psi), r, converged, rho_final, candidates,
                        sorted(f[0] for f in feasible))


@dataclass
class LdpSlopeReport:
    delta: float
    estimates: list
    eps_log_p: list
    used_eps: list
    dropped_eps: list
    slope: float
    I2_star: float
    predicted: float
    ratio: float
    rate_results: list

    @property
    def fitted(self) -> bool:
        return math.isfinite(self.slope)

    def records(self) -> list[dict]:
        out = []
        for est, elp in zip(self.estimates, self.eps_log_p):
            out.append({"epsilon": est.eps, "p_hat": est.p_hat, "ci": list(est.ci), "eps_log_p": elp})
        return out


def ldp_slope_check(coeffs: CoefficientSet, delta: float, eps_list, M: int, grid: TimeGrid,
                    x: float = 0.0, seed: int = 0, threads: int = 1, bridge: bool = True,
                    basis_degree: int = 2, rate_budget: int = 200) -> LdpSlopeReport:
    """Compare the decay of P(sup|Y^eps - Y| >= delta) with the backward rate.

    The slope of log p_hat against 1/eps (least squares over the eps with
    non-zero counts) estimates -inf I2 over the event; the prediction takes the
    cheaper of the two one-sided boundary targets Y +- delta.
    """
    eps_list = [float(e) for e in eps_list]
    if any(not 0 < e <= 1 for e in eps_list):
        raise ValueError("epsilons must lie in (0, 1]")
    if any(b >= a for a, b in zip(eps_list, eps_list[1:])):
        raise ValueError("epsilons must be decreasing")
    estimates: list[DeviationEstimate] = []
    for e in eps_list:
        estimates.extend(deviation_probabilities(coeffs, e, [delta], grid, M, x=x, seed=seed,
                                                 component="Y", bridge=bridge, threads=threads,
                                                 basis_degree=basis_degree))
    eps_log_p, used, dropped = [], [], []
    for est in estimates:
        if est.count == 0:
            eps_log_p.append(-math.inf)
            dropped.append(est.eps)
        else:
            eps_log_p.append(est.eps * math.log(est.p_hat))
            used.append(est)
    if len(used) >= 2:
        inv = np.array([1.0 / u.eps for u in used])
        logp = np.array([math.log(u.p_hat) for u in used])
        slope = float(np.polyfit(inv, logp, 1)[0])
    else:
        slope = math.nan

    skel_Y = deterministic_backward(coeffs, deterministic_forward(coeffs, grid, x), grid)
    results = []
    for sign in (1.0, -1.0):
        target = ExceedanceTarget(skel_Y.forward.copy(), float(delta), sign)
        results.append(rate_I2(ActionProblem(coeffs, target, x), grid, budget=rate_budget))
    feasible = [r.I2 for r in results if r.converged]
    I2_star = min(feasible) if feasible else math.inf
    predicted = -I2_star
    ratio = slope / predicted if math.isfinite(slope) and predicted not in (0.0, -math.inf) else math.nan
    return LdpSlopeReport(float(delta), estimates, eps_log_p, [u.eps for u in used], dropped,
                          slope, I2_star, predicted, ratio, results)
