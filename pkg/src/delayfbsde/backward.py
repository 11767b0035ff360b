"""Backward equation with time-delayed generator, along simulated forward ensembles."""
from __future__ import annotations

import itertools
import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .coefficients import CoefficientSet, LinearCoefficients, SegmentView
from .core import CONSTANT_INITIAL, ZERO, FullPath, TimeGrid
from .forward import Ensemble, NonContraction, segment_view

RIDGE_PENALTY = 1e-8


def monomial_exponents(dim: int, degree: int) -> list[tuple[int, ...]]:
    """Index tuples of all monomials of total degree <= ``degree``, constant first."""
    out = []
    for d in range(degree + 1):
        out.extend(itertools.combinations_with_replacement(range(dim), d))
    return out


def design_matrix(features: np.ndarray, degree: int) -> tuple[np.ndarray, list]:
    features = np.asarray(features, dtype=float)
    if features.ndim == 1:
        features = features[:, None]
    exps = monomial_exponents(features.shape[1], degree)
    A = np.empty((features.shape[0], len(exps)))
    for c, e in enumerate(exps):
        col = np.ones(features.shape[0])
        for j in e:
            col = col * features[:, j]
        A[:, c] = col
    return A, exps


class LeastSquaresProjector:
    """Orthogonal projection onto a polynomial basis of the features.

    The QR factorization is built once and reused for every response, which is
    what the backward sweep needs: the same design at step i in every Picard
    iteration. Rank-deficient designs fall back to ridge with penalty 1e-8 on
    norm-scaled columns.
    """

    def __init__(self, features: np.ndarray, degree: int):
        A, self.exponents = design_matrix(features, degree)
        M, p = A.shape
        if M <= p:
            raise ValueError(f"ensemble size {M} must exceed basis size {p}")
        scale = np.linalg.norm(A, axis=0)
        scale[scale == 0] = 1.0
        self.scale = scale
        self.Q, self.R = np.linalg.qr(A / scale)
        diag = np.abs(np.diag(self.R))
        self.ridge = bool(diag.min() <= 1e-10 * diag.max())
        if self.ridge:
            RtR = self.R.T @ self.R
            self._ridge_inv = np.linalg.inv(RtR + RIDGE_PENALTY * np.eye(p)) @ self.R.T

    @property
    def size(self) -> int:
        return len(self.exponents)

    def _scaled_coef(self, y):
        qty = self.Q.T @ y
        if self.ridge:
            return self._ridge_inv @ qty
        return np.linalg.solve(self.R, qty) if self.R.shape[0] else qty

    def coef(self, y: np.ndarray) -> np.ndarray:
        c = self._scaled_coef(y)
        return (c.T / self.scale).T

    def fit(self, y: np.ndarray) -> np.ndarray:
        if self.ridge:
            return self.Q @ (self.R @ self._scaled_coef(y))
        return self.Q @ (self.Q.T @ y)


@dataclass
class Regression:
    coef: np.ndarray
    fitted: np.ndarray
    exponents: list
    ridge_fallback: bool


def regression_cond_exp(responses, features, degree: int) -> Regression:
    """Least-squares regression of ``responses`` on monomials of ``features`` up to ``degree``."""
    P = LeastSquaresProjector(features, degree)
    y = np.asarray(responses, dtype=float)
    return Regression(P.coef(y), P.fit(y), P.exponents, P.ridge)


def informative_features(columns: list[np.ndarray]) -> np.ndarray:
    """Stack feature columns, dropping exactly constant ones and exact duplicates."""
    kept = []
    for c in columns:
        if np.ptp(c) == 0:
            continue
        if any(np.array_equal(c, k) for k in kept):
            continue
        kept.append(c)
    if not kept:
        return np.empty((columns[0].shape[0], 0))
    return np.column_stack(kept)


def step_features(X: np.ndarray, k: int, steps: np.ndarray) -> np.ndarray:
    """X(t_i) and X(t_i + u_j) for the delay atoms, constant columns removed."""
    return informative_features([X[:, k - s] for s in steps])


@dataclass
class BsdeSolution:
    grid: TimeGrid
    Y: np.ndarray
    Z: np.ndarray
    picard_iterations: int
    iterate_gaps: list = field(default_factory=list)
    regression_basis_size: int = 0
    truncated_steps: int = 0
    ridge_steps: int = 0

    def Y_path(self, m: int) -> FullPath:
        return FullPath(self.grid, self.Y[m], CONSTANT_INITIAL)

    def Z_path(self, m: int) -> FullPath:
        return FullPath(self.grid, self.Z[m], ZERO)

    def z_energy(self) -> np.ndarray:
        """Left-rectangle int_0^T Z^2 dt per path."""
        N = self.grid.N
        return np.sum(self.Z[:, N:2 * N] ** 2, axis=1) * self.grid.dt


def terminal_values(coeffs: CoefficientSet, X: np.ndarray, grid: TimeGrid) -> np.ndarray:
    steps, weights = coeffs.probes(grid)
    return coeffs.g(segment_view(X, 2 * grid.N, steps, weights))


def _check_contraction(coeffs, grid):
    if not coeffs.contracting(grid.T):
        warnings.warn(
            f"8 K e max(1, T) = {coeffs.contraction_number(grid.T):.3g} >= 1: "
            "outside the guaranteed contraction regime", RuntimeWarning, stacklevel=3)


def solve_bsde(coeffs: CoefficientSet, forward: Ensemble, grid: TimeGrid | None = None,
               basis_degree: int = 2, tol: float = 1e-12, max_iter: int = 100) -> BsdeSolution:
    """Whole-path Picard iteration with regression-based conditional expectations.

    Each sweep runs backward from Y(T) = g(X_T):
        Z(t_i) = E[(Y(t_{i+1}) - E[Y(t_{i+1}) | F_i]) dW_i | F_i] / dt
        Y(t_i) = E[Y(t_{i+1}) | F_i] + f(t_i, X_{t_i}, Y_{t_i}, Z_{t_i}) dt
    with delayed Y, Z values from the previous sweep (lag-0 Z from the current
    one). Conditional expectations regress on polynomials of X(t_i) and the
    delayed X values at the atoms of the delay measure.
    """
    grid = grid or forward.grid
    if grid != forward.grid:
        raise ValueError("forward ensemble was simulated on a different grid")
    _check_contraction(coeffs, grid)
    X, dW = forward.X, forward.dW
    M = X.shape[0]
    N, dt = grid.N, grid.dt
    steps, weights = coeffs.probes(grid)

    projectors = []
    truncated = ridge = 0
    for i in range(N):
        feats = step_features(X, N + i, steps)
        if feats.shape[1] < len(steps):
            truncated += 1
        P = LeastSquaresProjector(feats, basis_degree)
        ridge += P.ridge
        projectors.append(P)

    terminal = terminal_values(coeffs, X, grid)
    Y = np.repeat(terminal[:, None], 2 * N + 1, axis=1)
    Z = np.zeros((M, 2 * N + 1))
    gaps = []
    for n in range(max_iter):
        Yn = np.empty_like(Y)
        Zn = np.zeros_like(Z)
        Yn[:, 2 * N] = terminal
        for i in range(N - 1, -1, -1):
            k = N + i
            P = projectors[i]
            nxt = Yn[:, k + 1]
            yhat = P.fit(nxt)
            Zn[:, k] = P.fit((nxt - yhat) * dW[:, i]) / dt
            zvals = Z[:, k - steps]
            zvals[:, 0] = Zn[:, k]
            fval = coeffs.f(i * dt, segment_view(X, k, steps, weights),
                            segment_view(Y, k, steps, weights), SegmentView(zvals, weights))
            Yn[:, k] = yhat + fval * dt
        Zn[:, 2 * N] = Zn[:, 2 * N - 1]
        Yn[:, :N] = Yn[:, N:N + 1]
        gap = max(np.max(np.abs(Yn[:, N:] - Y[:, N:])), np.max(np.abs(Zn[:, N:] - Z[:, N:])))
        gaps.append(float(gap))
        Y, Z = Yn, Zn
        if not math.isfinite(gap):
            raise FloatingPointError("backward iterate became non-finite")
        if gap <= tol:
            break
    else:
        ratio = gaps[-1] / gaps[-2] if len(gaps) > 1 and gaps[-2] > 0 else math.nan
        raise NonContraction(f"backward Picard iteration did not reach tol={tol:g} in {max_iter} sweeps",
                             ratio=ratio, gaps=gaps)
    return BsdeSolution(grid, Y, Z, len(gaps), gaps,
                        regression_basis_size=max(P.size for P in projectors),
                        truncated_steps=truncated, ridge_steps=ridge)


def deterministic_backward_batch(coeffs: CoefficientSet, X: np.ndarray, grid: TimeGrid,
                                 tol: float = 1e-12, max_iter: int = 500) -> tuple[np.ndarray, list]:
    """Backward delay integral equation with Z = 0 for every row of ``X`` (B, 2N+1).

    Picard sweeps of the left-rectangle recursion
        Y(t_i) = Y(t_{i+1}) + f(t_i, X_{t_i}, Y_{t_i}, 0) dt,
    delayed Y values from the previous sweep. Returns (Y, gaps).
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    B = X.shape[0]
    N, dt = grid.N, grid.dt
    steps, weights = coeffs.probes(grid)
    terminal = terminal_values(coeffs, X, grid)
    Y = np.repeat(terminal[:, None], 2 * N + 1, axis=1)
    if isinstance(coeffs, LinearCoefficients):
        p = coeffs.params
        gaps = np.zeros(max_iter)
        n = _kernels.backward_linear(X, Y, terminal, steps, weights, p.k0, p.k1, p.k2, p.k3,
                                     dt, tol, max_iter, gaps)
        if n < 0:
            raise FloatingPointError("backward iterate became non-finite")
        gaps = gaps[:n].tolist()
        if n == max_iter and gaps[-1] > tol:
            raise NonContraction(f"deterministic backward iteration did not reach tol={tol:g}",
                                 ratio=_last_ratio(gaps), gaps=gaps)
        return Y, gaps
    zeros = np.zeros((B, len(steps)))
    gaps = []
    for n in range(max_iter):
        new = np.empty_like(Y)
        new[:, 2 * N] = terminal
        for i in range(N - 1, -1, -1):
            k = N + i
            fval = coeffs.f(i * dt, segment_view(X, k, steps, weights),
                            segment_view(Y, k, steps, weights), SegmentView(zeros, weights))
            new[:, k] = new[:, k + 1] + fval * dt
        new[:, :N] = new[:, N:N + 1]
        gap = float(np.max(np.abs(new[:, N:] - Y[:, N:])))
        gaps.append(gap)
        Y = new
        if not math.isfinite(gap):
            raise FloatingPointError("backward iterate became non-finite")
        if gap <= tol:
            return Y, gaps
    raise NonContraction(f"deterministic backward iteration did not reach tol={tol:g}",
                         ratio=_last_ratio(gaps), gaps=gaps)


def _last_ratio(gaps):
    return gaps[-1] / gaps[-2] if len(gaps) > 1 and gaps[-2] > 0 else math.nan


def deterministic_backward(coeffs: CoefficientSet, X: FullPath, grid: TimeGrid | None = None,
                           tol: float = 1e-12, max_iter: int = 500) -> FullPath:
    grid = grid or X.grid
    Y, _ = deterministic_backward_batch(coeffs, X.values[None, :], grid, tol, max_iter)
    return FullPath(grid, Y[0], CONSTANT_INITIAL)
