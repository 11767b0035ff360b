"""Coefficient sets (b, sigma, f, g) acting on path segments through a delay measure.

A segment X_t = (X(t+u))_{-T<=u<=0} enters the coefficients only through its
values at the probe lags: lag 0 followed by the remaining atoms of the snapped
delay measure. Callables receive :class:`SegmentView` objects, vectorized over
an ensemble axis.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, fields
from typing import Callable

import numpy as np

from .core import DelayMeasure, TimeGrid, snap_delay_measure


class SegmentView:
    """Values of an ensemble of segments at the probe lags.

    ``values`` has shape (M, L); column 0 is lag 0, column j the lag of
    ``steps[j]`` grid steps. ``weights`` carries the delay measure on those
    columns (zero for an artificial lag-0 column).
    """

    __slots__ = ("values", "weights")

    def __init__(self, values: np.ndarray, weights: np.ndarray):
        self.values = values
        self.weights = weights

    @property
    def now(self) -> np.ndarray:
        return self.values[:, 0]

    @property
    def mean(self) -> np.ndarray:
        """Integral of the segment against the delay measure."""
        acc = np.zeros(self.values.shape[0])
        for j, w in enumerate(self.weights):
            if w:
                acc += w * self.values[:, j]
        return acc

    def lag(self, j: int) -> np.ndarray:
        return self.values[:, j]


def _rows(value, view):
    value = np.asarray(value, dtype=float)
    if value.ndim == 0:
        return np.full(view.values.shape[0], float(value))
    return value


class CoefficientSet:
    """The quadruple (b, sigma, f, g) with its delay measure and Lipschitz constant.

    Signatures: ``b(t, X)``, ``sigma(t, X)``, ``f(t, X, Y, Z)``, ``g(X)`` with
    segment views as arguments; all return arrays of shape (M,). Coefficients are
    zero for t < 0.
    """

    def __init__(self, b: Callable, sigma: Callable, f: Callable, g: Callable,
                 alpha: DelayMeasure | None = None, lipschitz: float = 0.0,
                 compliant: bool = False, name: str = "custom"):
        self._b, self._sigma, self._f, self._g = b, sigma, f, g
        self.alpha = alpha if alpha is not None else DelayMeasure.dirac(0.0)
        self.lipschitz = float(lipschitz)
        self.compliant = compliant
        self.name = name

    def probes(self, grid: TimeGrid) -> tuple[np.ndarray, np.ndarray]:
        """(steps, weights) of the probe lags on ``grid``; steps[0] == 0."""
        snapped = snap_delay_measure(self.alpha, grid)
        steps = [0] + [m for m in snapped.steps if m != 0]
        weights = [snapped.mass_at_zero()] + [w for m, w in zip(snapped.steps, snapped.weights) if m != 0]
        return np.array(steps, dtype=np.int64), np.array(weights, dtype=float)

    def b(self, t, X):
        if t < 0:
            return np.zeros(X.values.shape[0])
        return _rows(self._b(t, X), X)

    def sigma(self, t, X):
        if t < 0:
            return np.zeros(X.values.shape[0])
        return _rows(self._sigma(t, X), X)

    def f(self, t, X, Y, Z):
        if t < 0:
            return np.zeros(X.values.shape[0])
        return _rows(self._f(t, X, Y, Z), X)

    def g(self, X):
        return _rows(self._g(X), X)

    def contraction_number(self, T: float) -> float:
        """8 K e max(1, T); existence and uniqueness are guaranteed when below 1."""
        return 8.0 * self.lipschitz * math.e * max(1.0, T)

    def contracting(self, T: float) -> bool:
        return self.contraction_number(T) < 1.0

    def __repr__(self):
        return f"{type(self).__name__}({self.name!r}, K={self.lipschitz:g})"


@dataclass(frozen=True)
class LinearParams:
    """Parameters of the linear delay family.

    b = a0 X(t) + a1 <X_t>
    sigma = c0 + c1 <X_t>
    f = k0 Y(t) + k1 <Y_t> + k2 <Z_t> + k3 <X_t>
    g = g0 + G X(T)

    where <.> integrates the segment against the delay measure.
    """

    a0: float = 0.0
    a1: float = 0.0
    c0: float = 0.0
    c1: float = 0.0
    k0: float = 0.0
    k1: float = 0.0
    k2: float = 0.0
    k3: float = 0.0
    g0: float = 0.0
    G: float = 0.0

    def as_array(self) -> np.ndarray:
        return np.array([getattr(self, f.name) for f in fields(self)], dtype=float)


class LinearCoefficients(CoefficientSet):
    """Linear family; Lipschitz and linear-growth with the constant from :meth:`lipschitz_bound`.

    Compiled kernels in :mod:`delayfbsde._kernels` recognise this class.
    """

    def __init__(self, params: LinearParams, alpha: DelayMeasure | None = None,
                 lipschitz: float | None = None, name: str = "linear"):
        self.params = params
        p = params
        alpha = alpha if alpha is not None else DelayMeasure.dirac(0.0)
        bound = self.lipschitz_bound(p, alpha)
        if lipschitz is None:
            lipschitz = bound
        elif lipschitz < bound * (1 - 1e-12):
            raise ValueError(f"declared Lipschitz constant {lipschitz} is below the computed bound {bound}")

        super().__init__(
            b=lambda t, X: p.a0 * X.now + p.a1 * X.mean,
            sigma=lambda t, X: p.c0 + p.c1 * X.mean,
            f=lambda t, X, Y, Z: p.k0 * Y.now + p.k1 * Y.mean + p.k2 * Z.mean + p.k3 * X.mean,
            g=lambda X: p.g0 + p.G * X.now,
            alpha=alpha, lipschitz=lipschitz, compliant=math.isfinite(bound), name=name)

    @staticmethod
    def lipschitz_bound(p: LinearParams, alpha: DelayMeasure) -> float:
        """Smallest K certified for the Lipschitz and growth conditions.

        Point values at lag 0 are controlled through the delay measure's mass at 0,
        so a non-zero a0, k0 or G needs an atom at 0; otherwise the bound is +inf.
        """
        w0 = alpha.mass_at_zero()

        def point(c):
            if c == 0:
                return 0.0
            return abs(c) / math.sqrt(w0) if w0 > 0 else math.inf

        kb = (point(p.a0) + abs(p.a1)) ** 2
        ks = p.c1 ** 2
        kf = (point(p.k0) + abs(p.k1) + abs(p.k2) + abs(p.k3)) ** 2
        kg = point(p.G) ** 2
        return max(kb, ks, kf, kg)


PRESETS = ("zero", "pure_noise", "linear", "linear_delay")
PARAM_KEYS = tuple(f.name for f in fields(LinearParams)) + ("tau", "w0", "K")


def make_preset(name: str, **params) -> LinearCoefficients:
    """Build a named preset.

    zero          all coefficients vanish.
    pure_noise    b = 0, sigma = 1, f = 0, g(X_T) = X(T).
    linear        linear family with delay measure delta_0.
    linear_delay  linear family with w0 delta_0 + (1 - w0) delta_{-tau}, w0 in [0, 1].

    Keyword arguments override the family parameters; ``tau`` (default 0.5),
    ``w0`` (default 0.5) and ``K`` (declared Lipschitz constant) are also accepted.
    """
    unknown = set(params) - set(PARAM_KEYS)
    if unknown:
        raise KeyError(f"unknown preset parameter(s): {', '.join(sorted(unknown))}")
    K = params.pop("K", None)
    tau = float(params.pop("tau", 0.5))
    w0 = float(params.pop("w0", 0.5))
    if name == "zero":
        if any(v != 0 for v in params.values()):
            raise ValueError("the zero preset takes no non-zero parameters")
        p, alpha = LinearParams(), DelayMeasure.dirac(0.0)
    elif name == "pure_noise":
        base = dict(c0=1.0, G=1.0)
        base.update(params)
        p, alpha = LinearParams(**base), DelayMeasure.dirac(0.0)
    elif name == "linear":
        p, alpha = LinearParams(**params), DelayMeasure.dirac(0.0)
    elif name == "linear_delay":
        if tau < 0:
            raise ValueError("tau must be non-negative")
        if not 0 <= w0 <= 1:
            raise ValueError("w0 must lie in [0, 1]")
        p = LinearParams(**params)
        if tau == 0 or w0 == 1:
            alpha = DelayMeasure.dirac(0.0)
        elif w0 == 0:
            alpha = DelayMeasure.dirac(-tau)
        else:
            alpha = DelayMeasure((0.0, -tau), (w0, 1 - w0))
    else:
        raise KeyError(f"unknown preset {name!r}; expected one of {', '.join(PRESETS)}")
    return LinearCoefficients(p, alpha, lipschitz=K, name=name)


def preset_params(coeffs: LinearCoefficients) -> dict:
    return asdict(coeffs.params)
