"""Forward delay SDE: Euler-Maruyama, constructive Picard scheme, ε = 0 skeleton."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .coefficients import CoefficientSet, LinearCoefficients, SegmentView
from .core import CONSTANT_INITIAL, FullPath, TimeGrid
from .noise import NoiseSource, brownian_increments


class CoefficientBlowUp(FloatingPointError):
    """A simulated path left the floats (coefficients blew up)."""

    def __init__(self, step: int, t: float):
        super().__init__(f"non-finite state produced at step {step} (t={t:g})")
        self.step = step
        self.t = t


class NonContraction(RuntimeError):
    """Picard iteration exhausted its budget; ``ratio`` is the last measured gap ratio."""

    def __init__(self, message: str, ratio: float = math.nan, gaps=()):
        super().__init__(message)
        self.ratio = ratio
        self.gaps = list(gaps)


def segment_view(arr: np.ndarray, k: int, steps: np.ndarray, weights: np.ndarray) -> SegmentView:
    """Segment of every row of ``arr`` at full index ``k``."""
    return SegmentView(arr[:, k - steps], weights)


def euler_paths(coeffs: CoefficientSet, grid: TimeGrid, x, dZ: np.ndarray) -> np.ndarray:
    """Explicit Euler for X' = b + sigma * (dZ / dt) on every row of ``dZ``.

    ``dZ`` has shape (M, N) and holds the driving increments (sqrt(eps) dW for
    the SDE, psi dt for a controlled skeleton). Returns (M, 2N+1) paths with
    constant-initial history equal to ``x``.
    """
    dZ = np.atleast_2d(np.asarray(dZ, dtype=float))
    M, N = dZ.shape
    if N != grid.N:
        raise ValueError(f"increments have {N} steps, grid has {grid.N}")
    X = np.empty((M, 2 * N + 1))
    X[:, :N + 1] = np.asarray(x, dtype=float).reshape(-1, 1) if np.ndim(x) else float(x)
    steps, weights = coeffs.probes(grid)
    dt = grid.dt
    if isinstance(coeffs, LinearCoefficients):
        p = coeffs.params
        with np.errstate(over="ignore", invalid="ignore"):
            bad = _kernels.euler_linear(X, dZ, steps, weights, p.a0, p.a1, p.c0, p.c1, dt)
        if bad >= 0:
            raise CoefficientBlowUp(bad, bad * dt)
        return X
    with np.errstate(over="ignore", invalid="ignore"):
        for i in range(N):
            k = N + i
            seg = segment_view(X, k, steps, weights)
            t = i * dt
            X[:, k + 1] = X[:, k] + coeffs.b(t, seg) * dt + coeffs.sigma(t, seg) * dZ[:, i]
            if not np.all(np.isfinite(X[:, k + 1])):
                raise CoefficientBlowUp(i, t)
    return X


def simulate_forward_ensemble(coeffs: CoefficientSet, eps: float, grid: TimeGrid,
                              dW: np.ndarray, x: float) -> np.ndarray:
    """Euler-Maruyama on every row of the Brownian increments ``dW`` (M, N)."""
    if eps < 0:
        raise ValueError("epsilon must be non-negative")
    return euler_paths(coeffs, grid, x, math.sqrt(eps) * np.asarray(dW, dtype=float))


def simulate_forward(coeffs: CoefficientSet, eps: float, grid: TimeGrid,
                     noise: NoiseSource, x: float) -> FullPath:
    X = simulate_forward_ensemble(coeffs, eps, grid, noise.increments(grid)[None, :], x)
    return FullPath(grid, X[0], CONSTANT_INITIAL)


def deterministic_forward(coeffs: CoefficientSet, grid: TimeGrid, x: float) -> FullPath:
    """The ε = 0 delay ODE by explicit Euler; equal to ``simulate_forward`` at ε = 0."""
    X = euler_paths(coeffs, grid, x, np.zeros((1, grid.N)))
    return FullPath(grid, X[0], CONSTANT_INITIAL)


@dataclass
class Ensemble:
    """M forward paths sharing one seeded Brownian source."""

    grid: TimeGrid
    eps: float
    x: float
    seed: int
    dW: np.ndarray
    X: np.ndarray

    @property
    def M(self) -> int:
        return self.X.shape[0]

    def path(self, m: int) -> FullPath:
        return FullPath(self.grid, self.X[m], CONSTANT_INITIAL)


def simulate_ensemble(coeffs: CoefficientSet, eps: float, grid: TimeGrid, M: int, x: float,
                      seed: int, threads: int = 1, dW: np.ndarray | None = None) -> Ensemble:
    """Simulate paths 0..M-1; pass ``dW`` to reuse increments (common random numbers)."""
    if dW is None:
        dW = brownian_increments(seed, M, grid, threads)
    X = simulate_forward_ensemble(coeffs, eps, grid, dW, x)
    return Ensemble(grid, float(eps), float(x), int(seed), dW, X)


@dataclass
class ForwardSolveReport:
    path: FullPath
    scheme: str
    picard_iterations: int = 0
    contraction_ratio_estimates: list = field(default_factory=list)
    interval_breakpoints: list = field(default_factory=list)
    iterate_gaps: list = field(default_factory=list)
    ratio_bound: float = math.nan

    @property
    def intervals(self) -> int:
        return max(1, len(self.interval_breakpoints) - 1)


def picard_breakpoints(K: float, eps: float, grid: TimeGrid) -> list[int]:
    """Grid indices 0 = i_0 < ... < i_p = N with 2 K (t_{j+1} - t_j)(T + 4 eps) < 1.

    Starts from p = floor(2 K T (T + 4 eps)) + 1 equal pieces and refines if
    snapping to the grid pushes a piece over the bound.
    """
    T, N = grid.T, grid.N
    rate = 2.0 * K * (T + 4.0 * eps)
    if rate * grid.dt >= 1.0:
        raise ValueError(f"a single step violates the contraction bound (2K dt (T+4eps) = {rate * grid.dt:.3g})")
    p = int(math.floor(rate * T)) + 1
    while True:
        idx = sorted({round(j * N / p) for j in range(p + 1)})
        if all(rate * (b - a) * grid.dt < 1.0 for a, b in zip(idx, idx[1:])):
            return idx
        p += 1


def picard_forward(coeffs: CoefficientSet, eps: float, grid: TimeGrid, noise: NoiseSource,
                   x: float, tol: float = 1e-10, max_iter: int = 200) -> ForwardSolveReport:
    """Forward solve by Picard iteration from the zero iterate on contraction sub-intervals.

    ``contraction_ratio_estimates`` holds squared ratios of successive sup gaps,
    comparable with the mean-square factor 2 K t0 (T + 4 eps).
    """
    if eps < 0:
        raise ValueError("epsilon must be non-negative")
    N, dt = grid.N, grid.dt
    dZ = math.sqrt(eps) * noise.increments(grid)
    steps, weights = coeffs.probes(grid)
    K = coeffs.lipschitz
    idx = picard_breakpoints(K, eps, grid)
    X = np.full((1, 2 * N + 1), float(x))
    ratios, gaps = [], []
    total = 0
    with np.errstate(over="ignore", invalid="ignore"):
        for a, b in zip(idx, idx[1:]):
            start = X[0, N + a]
            work = X.copy()
            work[0, N + a:N + b + 1] = 0.0
            prev_gap = None
            for n in range(max_iter):
                new = work.copy()
                new[0, N + a] = start
                for i in range(a, b):
                    k = N + i
                    seg = segment_view(work, k, steps, weights)
                    t = i * dt
                    new[0, k + 1] = new[0, k] + coeffs.b(t, seg)[0] * dt + coeffs.sigma(t, seg)[0] * dZ[i]
                gap = float(np.max(np.abs(new[0, N + a:N + b + 1] - work[0, N + a:N + b + 1])))
                if not math.isfinite(gap):
                    raise CoefficientBlowUp(a, a * dt)
                gaps.append(gap)
                if prev_gap is not None and prev_gap > 0:
                    ratios.append((gap / prev_gap) ** 2)
                prev_gap = gap
                work = new
                total += 1
                if gap <= tol:
                    break
            else:
                raise NonContraction(
                    f"Picard iteration on [{a * dt:g}, {b * dt:g}] did not reach tol={tol:g} "
                    f"in {max_iter} iterations", ratio=ratios[-1] if ratios else math.nan, gaps=gaps)
            X[0, N + a:N + b + 1] = work[0, N + a:N + b + 1]
    longest = max(b - a for a, b in zip(idx, idx[1:])) * dt
    return ForwardSolveReport(
        path=FullPath(grid, X[0], CONSTANT_INITIAL),
        scheme="picard",
        picard_iterations=total,
        contraction_ratio_estimates=ratios,
        interval_breakpoints=[i * dt for i in idx],
        iterate_gaps=gaps,
        ratio_bound=2.0 * K * longest * (grid.T + 4.0 * eps),
    )
