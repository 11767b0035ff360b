"""Grids, paths on [-T, T], and discrete delay measures."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

CONSTANT_INITIAL = "constant-initial"
ZERO = "zero"
_CONVENTIONS = (CONSTANT_INITIAL, ZERO)


@dataclass(frozen=True)
class TimeGrid:
    """Uniform grid t_i = i T / N on [0, T], mirrored onto [-T, 0]."""

    T: float
    N: int

    def __post_init__(self):
        if not (self.T > 0 and math.isfinite(self.T)):
            raise ValueError(f"horizon T must be positive and finite, got {self.T!r}")
        if int(self.N) != self.N or self.N < 1:
            raise ValueError(f"steps N must be a positive integer, got {self.N!r}")
        object.__setattr__(self, "N", int(self.N))
        object.__setattr__(self, "T", float(self.T))

    @property
    def dt(self) -> float:
        return self.T / self.N

    @property
    def nodes(self) -> np.ndarray:
        """Nodes of [0, T]."""
        return np.arange(self.N + 1) * self.dt

    @property
    def history_nodes(self) -> np.ndarray:
        """Nodes of [-T, 0]."""
        return np.arange(-self.N, 1) * self.dt

    @property
    def full_nodes(self) -> np.ndarray:
        """All 2N+1 nodes of [-T, T]; index N is t = 0."""
        return np.arange(-self.N, self.N + 1) * self.dt

    def index(self, t: float) -> int:
        """Index into ``full_nodes`` of the node at time t (must lie on the grid)."""
        k = t / self.dt
        r = round(k)
        if abs(k - r) > 1e-9 or not -self.N <= r <= self.N:
            raise ValueError(f"t={t!r} is not a node of the grid")
        return int(r) + self.N


def make_grid(T: float, N: int) -> TimeGrid:
    return TimeGrid(T, N)


@dataclass(frozen=True)
class FullPath:
    """A real trajectory over the 2N+1 nodes of [-T, T].

    ``values[grid.N]`` is the value at t = 0. The history part (indices < N)
    follows ``convention``: held at the t = 0 value, or identically zero.
    """

    grid: TimeGrid
    values: np.ndarray
    convention: str = CONSTANT_INITIAL

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        if v.shape != (2 * self.grid.N + 1,):
            raise ValueError(f"expected {2 * self.grid.N + 1} values, got shape {v.shape}")
        if self.convention not in _CONVENTIONS:
            raise ValueError(f"unknown history convention {self.convention!r}")
        N = self.grid.N
        expected = v[N] if self.convention == CONSTANT_INITIAL else 0.0
        if np.any(v[:N] != expected):
            raise ValueError(f"history does not follow the {self.convention} convention")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @classmethod
    def from_forward(cls, grid: TimeGrid, forward_values, convention=CONSTANT_INITIAL):
        """Build from the N+1 values on [0, T], filling the history by convention."""
        return cls(grid, extend_history(np.asarray(forward_values, float), grid.N, convention), convention)

    @property
    def forward(self) -> np.ndarray:
        """Values on [0, T]."""
        return self.values[self.grid.N:]

    def at(self, t: float) -> float:
        return float(self.values[self.grid.index(t)])

    def segment(self, s: float) -> np.ndarray:
        """Window of the path over [s - T, s] for a node s in [0, T]."""
        i = self.grid.index(s)
        if i < self.grid.N:
            raise ValueError("segments are defined for s in [0, T]")
        return self.values[i - self.grid.N:i + 1]


def extend_history(forward: np.ndarray, N: int, convention: str) -> np.ndarray:
    """Prepend N history values to arrays of shape (..., N+1)."""
    forward = np.asarray(forward, dtype=float)
    if forward.shape[-1] != N + 1:
        raise ValueError(f"expected trailing dimension {N + 1}, got {forward.shape[-1]}")
    out = np.empty(forward.shape[:-1] + (2 * N + 1,))
    out[..., N:] = forward
    if convention == CONSTANT_INITIAL:
        out[..., :N] = forward[..., :1]
    elif convention == ZERO:
        out[..., :N] = 0.0
    else:
        raise ValueError(f"unknown history convention {convention!r}")
    return out


@dataclass(frozen=True)
class DelayMeasure:
    """Finitely supported probability measure on [-T, 0] given by (lag, weight) atoms."""

    lags: tuple
    weights: tuple
    steps: tuple | None = field(default=None, compare=False)

    def __post_init__(self):
        lags = tuple(float(u) for u in self.lags)
        weights = tuple(float(w) for w in self.weights)
        if len(lags) != len(weights) or not lags:
            raise ValueError("need one weight per lag and at least one atom")
        if any(not w > 0 for w in weights):
            raise ValueError("atom weights must be positive")
        if any(u > 0 for u in lags):
            raise ValueError("lags must lie in [-T, 0]")
        if abs(math.fsum(weights) - 1.0) > 1e-12:
            raise ValueError(f"weights must sum to 1, got {math.fsum(weights)!r}")
        object.__setattr__(self, "lags", lags)
        object.__setattr__(self, "weights", weights)

    @classmethod
    def dirac(cls, lag: float = 0.0) -> DelayMeasure:
        return cls((lag,), (1.0,))

    @classmethod
    def from_pairs(cls, pairs) -> DelayMeasure:
        lags, weights = zip(*pairs)
        return cls(lags, weights)

    @property
    def atoms(self) -> list[tuple[float, float]]:
        return list(zip(self.lags, self.weights))

    def is_snapped(self, grid: TimeGrid) -> bool:
        return self.steps is not None and all(
            abs(u + m * grid.dt) <= 1e-12 * max(1.0, grid.T) for u, m in zip(self.lags, self.steps))

    def mass_at_zero(self) -> float:
        return math.fsum(w for u, w in zip(self.lags, self.weights) if u == 0.0)


def snap_delay_measure(alpha: DelayMeasure, grid: TimeGrid) -> DelayMeasure:
    """Move every lag to its nearest grid node (ties toward 0), merging atoms.

    The result carries ``steps``: lags as non-negative multiples of ``grid.dt``.
    """
    if any(u < -grid.T * (1 + 1e-12) for u in alpha.lags):
        raise ValueError(f"lags must lie in [-{grid.T}, 0]")
    merged: dict[int, list[float]] = {}
    for u, w in zip(alpha.lags, alpha.weights):
        k = round(u / grid.dt, 9)
        m = -int(math.floor(k + 0.5))
        merged.setdefault(min(m, grid.N), []).append(w)
    steps = sorted(merged)
    lags = tuple(-m * grid.dt if m else 0.0 for m in steps)
    weights = tuple(math.fsum(merged[m]) for m in steps)
    return DelayMeasure(lags, weights, steps=tuple(steps))


def segment_integral(path: FullPath, s: float, alpha: DelayMeasure) -> float:
    """Sum of w_j * path(s + u_j) over the atoms of a snapped measure."""
    grid = path.grid
    if not alpha.is_snapped(grid):
        raise ValueError("delay measure must be snapped to the path's grid")
    i = grid.index(s)
    if i < grid.N:
        raise ValueError("s must lie in [0, T]")
    return float(sum(w * path.values[i - m] for w, m in zip(alpha.weights, alpha.steps)))
