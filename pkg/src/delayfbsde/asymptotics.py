"""Monte Carlo estimators for the small-noise behaviour of (X^eps, Y^eps, Z^eps)."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import binomtest

from .backward import LeastSquaresProjector, deterministic_backward, solve_bsde, step_features, terminal_values
from .coefficients import CoefficientSet
from .core import TimeGrid
from .forward import deterministic_forward, segment_view, simulate_ensemble
from .noise import auxiliary_uniforms, brownian_increments


def _mean_se(samples: np.ndarray) -> tuple[float, float]:
    samples = np.asarray(samples, dtype=float)
    M = samples.shape[0]
    mean = float(np.mean(samples))
    se = float(np.std(samples, ddof=1) / math.sqrt(M)) if M > 1 else math.nan
    return mean, se


def _sup_sq(paths: np.ndarray, N: int) -> np.ndarray:
    return np.max(np.abs(paths[:, N:]), axis=1) ** 2


@dataclass
class MomentReport:
    eps: float
    x: float
    M: int
    sup_X2: float
    sup_Y2: float
    int_Z2: float
    se: dict
    C2: float

    @property
    def per_statistic(self) -> dict:
        """Each statistic divided by 1 + |x|^2."""
        d = 1.0 + self.x ** 2
        return {"X": self.sup_X2 / d, "Y": self.sup_Y2 / d, "Z": self.int_Z2 / d}


def moment_bounds(coeffs: CoefficientSet, eps: float, grid: TimeGrid, M: int, x: float,
                  seed: int = 0, threads: int = 1, basis_degree: int = 2, tol: float = 1e-10,
                  max_iter: int = 100, dW: np.ndarray | None = None) -> MomentReport:
    """E sup|X|^2, E sup|Y|^2 and E int |Z|^2 with the implied C2 = max / (1 + |x|^2)."""
    if M < 100:
        raise ValueError("moment estimates need M >= 100")
    ens = simulate_ensemble(coeffs, eps, grid, M, x, seed, threads, dW=dW)
    sol = solve_bsde(coeffs, ens, basis_degree=basis_degree, tol=tol, max_iter=max_iter)
    N = grid.N
    mx, sx = _mean_se(_sup_sq(ens.X, N))
    my, sy = _mean_se(_sup_sq(sol.Y, N))
    mz, sz = _mean_se(sol.z_energy())
    return MomentReport(eps, x, M, mx, my, mz, {"X": sx, "Y": sy, "Z": sz},
                        C2=max(mx, my, mz) / (1.0 + x ** 2))


@dataclass
class RateReport:
    """Cauchy statistics (i) sup|dX|^2, (ii) sup|dY|^2, (iii) int|dZ|^2 for one pair."""

    eps1: float
    eps2: float
    M: int
    statistics: dict
    standard_errors: dict
    implied_constants: dict = field(default_factory=dict)

    @property
    def half_widths(self) -> dict:
        return {k: 1.96 * v for k, v in self.standard_errors.items()}

    @property
    def scale(self) -> float:
        return (math.sqrt(self.eps1) - math.sqrt(self.eps2)) ** 2


def cauchy_rate(coeffs: CoefficientSet, eps1: float, eps2: float, grid: TimeGrid, M: int,
                x: float = 0.0, seed: int = 0, threads: int = 1, basis_degree: int = 2,
                tol: float = 1e-10, max_iter: int = 100, dW: np.ndarray | None = None) -> RateReport:
    """Estimate the three coupling statistics with common random numbers."""
    if not (0 < eps2 <= eps1 <= 1):
        raise ValueError(f"need 0 < eps2 <= eps1 <= 1, got ({eps1}, {eps2})")
    if dW is None:
        dW = brownian_increments(seed, M, grid, threads)
    N = grid.N
    ens = [simulate_ensemble(coeffs, e, grid, M, x, seed, dW=dW) for e in (eps1, eps2)]
    sols = [solve_bsde(coeffs, e, basis_degree=basis_degree, tol=tol, max_iter=max_iter) for e in ens]
    samples = {
        "X": _sup_sq(ens[0].X - ens[1].X, N),
        "Y": _sup_sq(sols[0].Y - sols[1].Y, N),
        "Z": np.sum((sols[0].Z[:, N:2 * N] - sols[1].Z[:, N:2 * N]) ** 2, axis=1) * grid.dt,
    }
    stats, ses = {}, {}
    for k, s in samples.items():
        stats[k], ses[k] = _mean_se(s)
    rep = RateReport(eps1, eps2, M, stats, ses)
    scale = rep.scale
    rep.implied_constants = {k: (v / scale if scale > 0 else math.nan) for k, v in stats.items()}
    return rep


@dataclass
class DeviationEstimate:
    eps: float
    delta: float
    count: int
    M: int
    component: str = "X"

    @property
    def p_hat(self) -> float:
        return self.count / self.M

    @property
    def ci(self) -> tuple[float, float]:
        """95% Wilson interval."""
        ci = binomtest(self.count, self.M).proportion_ci(confidence_level=0.95, method="wilson")
        return float(ci.low), float(ci.high)

    @property
    def half_width(self) -> float:
        lo, hi = self.ci
        return 0.5 * (hi - lo)


def crossing_probability(dev: np.ndarray, vol: np.ndarray, delta: float, dt: float) -> np.ndarray:
    """Probability that |D| reaches ``delta`` somewhere on [0, T], per path.

    ``dev`` (M, N+1) holds deviations at the nodes; between nodes the deviation
    is a Brownian bridge with variance ``vol**2 * dt`` per step (``vol`` (M, N)).
    Each barrier uses the bridge hitting probability exp(-2 (h-a)(h-b) / (v^2 dt));
    a double hit within one step is neglected.
    """
    a, b = dev[:, :-1], dev[:, 1:]
    var = vol ** 2 * dt
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        up = np.where(var > 0, np.exp(-2.0 * (delta - a) * (delta - b) / var), 0.0)
        down = np.where(var > 0, np.exp(-2.0 * (delta + a) * (delta + b) / var), 0.0)
    step = np.minimum(1.0, up + down)
    at_node = np.abs(dev) > delta
    step = np.where(at_node[:, :-1] | at_node[:, 1:], 1.0, step)
    survive = np.prod(1.0 - step, axis=1)
    return 1.0 - survive


def _local_vol_X(coeffs, X, grid, eps):
    steps, weights = coeffs.probes(grid)
    N = grid.N
    out = np.empty((X.shape[0], N))
    for i in range(N):
        out[:, i] = coeffs.sigma(i * grid.dt, segment_view(X, N + i, steps, weights))
    return math.sqrt(eps) * np.abs(out)


def exceedances(dev: np.ndarray, vol: np.ndarray | None, deltas, dt: float,
                uniforms: np.ndarray | None) -> list[int]:
    """Count paths whose sup deviation exceeds each delta.

    With ``vol`` and ``uniforms`` the continuous-time event is sampled through
    the bridge crossing probability (one uniform per path keeps the events
    nested in delta); otherwise only the grid nodes are monitored.
    """
    counts = []
    for d in deltas:
        if vol is None:
            hit = np.max(np.abs(dev), axis=1) > d
        else:
            hit = uniforms < crossing_probability(dev, vol, d, dt)
        counts.append(int(np.count_nonzero(hit)))
    return counts


def deviation_probabilities(coeffs: CoefficientSet, eps: float, deltas, grid: TimeGrid, M: int,
                            x: float = 0.0, seed: int = 0, component: str = "X", bridge: bool = True,
                            threads: int = 1, basis_degree: int = 2, tol: float = 1e-10,
                            max_iter: int = 100, dW: np.ndarray | None = None) -> list[DeviationEstimate]:
    """Fraction of paths with sup_s |X^eps(s) - X(s)| > delta (or the same for Y)."""
    deltas = list(deltas)
    if any(not d > 0 for d in deltas):
        raise ValueError("delta must be positive")
    if component not in ("X", "Y"):
        raise ValueError("component must be 'X' or 'Y'")
    N = grid.N
    skel_X = deterministic_forward(coeffs, grid, x)
    ens = simulate_ensemble(coeffs, eps, grid, M, x, seed, threads, dW=dW)
    if component == "X":
        dev = ens.X[:, N:] - skel_X.forward
        vol = _local_vol_X(coeffs, ens.X, grid, eps) if bridge else None
    else:
        skel_Y = deterministic_backward(coeffs, skel_X, grid)
        sol = solve_bsde(coeffs, ens, basis_degree=basis_degree, tol=tol, max_iter=max_iter)
        dev = sol.Y[:, N:] - skel_Y.forward
        vol = np.abs(sol.Z[:, N:2 * N]) if bridge else None
    u = auxiliary_uniforms(seed, M, threads) if bridge else None
    counts = exceedances(dev, vol, deltas, grid.dt, u)
    return [DeviationEstimate(eps, d, c, M, component) for d, c in zip(deltas, counts)]


def deviation_probability(coeffs: CoefficientSet, eps: float, delta: float, grid: TimeGrid, M: int,
                          **kwargs) -> DeviationEstimate:
    return deviation_probabilities(coeffs, eps, [delta], grid, M, **kwargs)[0]


def fit_power(eps, p_hat, M: int) -> tuple[float, float]:
    """Least-squares fit log p = log C + slope log eps, with p floored at 1/(2M)."""
    e = np.log(np.asarray(eps, dtype=float))
    p = np.log(np.maximum(np.asarray(p_hat, dtype=float), 1.0 / (2 * M)))
    slope, intercept = np.polyfit(e, p, 1)
    return float(slope), float(math.exp(intercept))


@dataclass
class VariationReport:
    partition: list
    terminal_term: float
    terms: list
    V_hat: float
    se: float
    sup_X2: float = math.nan
    sup_Y2: float = math.nan


def uniform_partition(grid: TimeGrid, intervals: int) -> list[int]:
    """Grid indices of a uniform partition of [0, T] into ``intervals`` pieces."""
    if grid.N % intervals:
        raise ValueError(f"{intervals} intervals do not nest in a grid of {grid.N} steps")
    step = grid.N // intervals
    return list(range(0, grid.N + 1, step))


def _partition_indices(partition, grid):
    idx = []
    for p in partition:
        if isinstance(p, (int, np.integer)):
            idx.append(int(p))
        else:
            k = float(p) / grid.dt
            if abs(k - round(k)) > 1e-9:
                raise ValueError(f"partition node {p} is not a grid node")
            idx.append(int(round(k)))
    if idx[0] != 0 or idx[-1] != grid.N or any(b <= a for a, b in zip(idx, idx[1:])):
        raise ValueError("partition must be increasing grid nodes from 0 to T")
    return idx


def conditional_variation(Y: np.ndarray, X: np.ndarray, coeffs: CoefficientSet, partition,
                          grid: TimeGrid, degree: int = 2) -> VariationReport:
    """E|g(X_T)| + sum_k E|E[Y(t_{k+1}) - Y(t_k) | F_{t_k}]| over the partition.

    ``partition`` holds grid indices (ints) or node times (floats).
    Conditional expectations use the same polynomial regression as the backward
    solver, on X(t_k) and its delayed values.
    """
    Y = np.asarray(Y, dtype=float)
    X = np.asarray(X, dtype=float)
    idx = _partition_indices(partition, grid)
    N = grid.N
    steps, _ = coeffs.probes(grid)
    per_path = np.abs(terminal_values(coeffs, X, grid))
    terminal_term = float(np.mean(per_path))
    per_path = per_path.copy()
    terms = []
    for a, b in zip(idx, idx[1:]):
        P = LeastSquaresProjector(step_features(X, N + a, steps), degree)
        incr = np.abs(P.fit(Y[:, N + b] - Y[:, N + a]))
        terms.append(float(np.mean(incr)))
        per_path += incr
    V, se = _mean_se(per_path)
    return VariationReport([i * grid.dt for i in idx], terminal_term, terms, V, se,
                           sup_X2=float(np.mean(_sup_sq(X, N))), sup_Y2=float(np.mean(_sup_sq(Y, N))))
