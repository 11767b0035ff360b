"""Time the numba and numpy variants of the linear-family kernels.

    python3 benchmarks/bench_kernels.py [--M 20000] [--N 64] [--repeat 5]
"""
import argparse
import time

import numpy as np

from delayfbsde import _kernels
from delayfbsde.coefficients import make_preset
from delayfbsde.core import make_grid
from delayfbsde.noise import brownian_increments


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t)
    return min(times)


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--M", type=int, default=20_000)
    ap.add_argument("--N", type=int, default=64)
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()

    grid = make_grid(1.0, args.N)
    c = make_preset("linear_delay", a0=0.1, a1=0.05, c0=0.5, c1=0.05, k0=0.05, k1=0.05, k3=0.05, g0=1.0, G=0.1)
    p = c.params
    steps, weights = c.probes(grid)
    dZ = np.sqrt(0.2) * brownian_increments(0, args.M, grid)
    X0 = np.full((args.M, 2 * args.N + 1), 1.0)

    def euler(fn):
        X = X0.copy()
        fn(X, dZ, steps, weights, p.a0, p.a1, p.c0, p.c1, grid.dt)
        return X

    X = euler(_kernels.euler_linear_numba)
    terminal = p.g0 + p.G * X[:, -1]

    def backward(fn):
        Y = np.repeat(terminal[:, None], 2 * args.N + 1, axis=1)
        gaps = np.zeros(500)
        fn(X, Y, terminal, steps, weights, p.k0, p.k1, p.k2, p.k3, grid.dt, 1e-12, 500, gaps)
        return Y

    # compile outside the timed region
    euler(_kernels.euler_linear_numba)
    backward(_kernels.backward_linear_numba)
    assert np.allclose(euler(_kernels.euler_linear_numpy), X, rtol=1e-12, atol=1e-12)
    assert np.allclose(backward(_kernels.backward_linear_numpy), backward(_kernels.backward_linear_numba),
                       rtol=1e-12, atol=1e-12)

    print(f"M={args.M} N={args.N} best of {args.repeat}")
    print(f"{'kernel':<12}{'numpy [s]':>12}{'numba [s]':>12}{'speedup':>10}")
    for name, run in (("euler", euler), ("backward", backward)):
        t_np = best_of(lambda: run(getattr(_kernels, f"{name}_linear_numpy")), args.repeat)
        t_nb = best_of(lambda: run(getattr(_kernels, f"{name}_linear_numba")), args.repeat)
        print(f"{name:<12}{t_np:>12.4f}{t_nb:>12.4f}{t_np / t_nb:>10.1f}")


if __name__ == "__main__":
    main()
