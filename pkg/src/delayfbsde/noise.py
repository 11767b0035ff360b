"""Seeded Brownian increments, reproducible per (seed, path_index)."""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .core import TimeGrid

_MASK64 = (1 << 64) - 1
# third counter word selects the stream; 0 for increments, 1 for auxiliary uniforms
_AUX_COUNTER = np.array([0, 0, 1, 0], dtype=np.uint64)


def _generator(seed: int, path_index: int, aux: bool = False) -> np.random.Generator:
    key = np.array([seed & _MASK64, path_index & _MASK64], dtype=np.uint64)
    bitgen = np.random.Philox(key=key, counter=_AUX_COUNTER if aux else None)
    return np.random.Generator(bitgen)


@dataclass(frozen=True)
class NoiseSource:
    """Counter-based Gaussian stream for one path.

    Philox keyed by (seed, path_index): the k-th increment depends only on
    (seed, path_index, k), so simulations at different epsilon that share the
    source see identical increments.
    """

    seed: int
    path_index: int = 0

    def increments(self, grid: TimeGrid) -> np.ndarray:
        """N i.i.d. N(0, T/N) increments."""
        z = _generator(self.seed, self.path_index).standard_normal(grid.N)
        return np.sqrt(grid.dt) * z

    def uniform(self) -> float:
        """One auxiliary U(0,1) draw, independent of the increments."""
        return float(_generator(self.seed, self.path_index, aux=True).random())


def _fill(seed, start, stop, N, out, aux):
    for p in range(start, stop):
        g = _generator(seed, p, aux)
        if aux:
            out[p] = g.random()
        else:
            out[p] = g.standard_normal(N)


def _blocks(M, threads):
    threads = max(1, int(threads or 1))
    size = max(1, -(-M // (4 * threads)))
    return [(a, min(M, a + size)) for a in range(0, M, size)], threads


def brownian_increments(seed: int, M: int, grid: TimeGrid, threads: int = 1) -> np.ndarray:
    """Increments for paths 0..M-1, shape (M, N); row p equals NoiseSource(seed, p)."""
    z = np.empty((M, grid.N))
    blocks, threads = _blocks(M, threads)
    if threads == 1:
        _fill(seed, 0, M, grid.N, z, False)
    else:
        with ThreadPoolExecutor(threads) as pool:
            list(pool.map(lambda ab: _fill(seed, ab[0], ab[1], grid.N, z, False), blocks))
    z *= np.sqrt(grid.dt)
    return z


def auxiliary_uniforms(seed: int, M: int, threads: int = 1) -> np.ndarray:
    """One uniform per path from the auxiliary stream, shape (M,)."""
    u = np.empty(M)
    blocks, threads = _blocks(M, threads)
    if threads == 1:
        _fill(seed, 0, M, 0, u, True)
    else:
        with ThreadPoolExecutor(threads) as pool:
            list(pool.map(lambda ab: _fill(seed, ab[0], ab[1], 0, u, True), blocks))
    return u
