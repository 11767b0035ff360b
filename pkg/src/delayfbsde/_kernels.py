"""Hot loops for the linear coefficient family.

Each kernel exists twice: an explicit-loop version compiled with numba and a
vectorized numpy version. Set ``DELAYFBSDE_DISABLE_NUMBA=1`` (or run without
numba installed) to select the numpy path. Both fill arrays laid out as
(paths, 2N+1) with index N at t = 0.
"""
import os

import numpy as np

try:
    from numba import njit
    HAS_NUMBA = True
except ImportError:  # pragma: no cover
    HAS_NUMBA = False

USE_NUMBA = HAS_NUMBA and os.environ.get("DELAYFBSDE_DISABLE_NUMBA", "").lower() not in ("1", "true", "yes")


# ---------------------------------------------------------------- numpy path

def euler_linear_numpy(X, dZ, steps, weights, a0, a1, c0, c1, dt):
    """X[:, N+i+1] = X_i + (a0 X_i + a1 <X>) dt + (c0 + c1 <X>) dZ_i, in place."""
    M, N = dZ.shape
    for i in range(N):
        k = N + i
        now = X[:, k]
        mean = np.zeros(M)
        for j in range(steps.shape[0]):
            if weights[j] != 0.0:
                mean += weights[j] * X[:, k - steps[j]]
        drift = a0 * now + a1 * mean
        sig = c0 + c1 * mean
        X[:, k + 1] = now + drift * dt + sig * dZ[:, i]
        if not np.all(np.isfinite(X[:, k + 1])):
            return i
    return -1


def backward_linear_numpy(X, Y, terminal, steps, weights, k0, k1, k2, k3, dt, tol, max_iter, gaps):
    """Picard sweeps for Y(s) = g + int_s^T f(r, X_r, Y_r, 0) dr, Y updated in place.

    ``Y`` holds the starting iterate (history included). Returns the number of
    sweeps performed; ``gaps[n]`` receives the sup distance of sweep n.
    """
    B, width = Y.shape
    N = (width - 1) // 2
    # delayed X enters only through <X>, fixed across sweeps
    xmean = np.zeros((B, N))
    for i in range(N):
        for j in range(steps.shape[0]):
            if weights[j] != 0.0:
                xmean[:, i] += weights[j] * X[:, N + i - steps[j]]
    new = np.empty_like(Y)
    for n in range(max_iter):
        new[:, 2 * N] = terminal
        for i in range(N - 1, -1, -1):
            k = N + i
            ymean = np.zeros(B)
            for j in range(steps.shape[0]):
                if weights[j] != 0.0:
                    ymean += weights[j] * Y[:, k - steps[j]]
            fval = k0 * Y[:, k] + k1 * ymean + k2 * 0.0 + k3 * xmean[:, i]
            new[:, k] = new[:, k + 1] + fval * dt
        new[:, :N] = new[:, N:N + 1]
        gap = np.max(np.abs(new[:, N:] - Y[:, N:]))
        Y[:, :] = new
        gaps[n] = gap
        if not np.isfinite(gap):
            return -(n + 1)
        if gap <= tol:
            return n + 1
    return max_iter


# ---------------------------------------------------------------- numba path

if HAS_NUMBA:

    @njit(cache=True)
    def euler_linear_numba(X, dZ, steps, weights, a0, a1, c0, c1, dt):
        M, N = dZ.shape
        for m in range(M):
            for i in range(N):
                k = N + i
                now = X[m, k]
                mean = 0.0
                for j in range(steps.shape[0]):
                    if weights[j] != 0.0:
                        mean += weights[j] * X[m, k - steps[j]]
                drift = a0 * now + a1 * mean
                sig = c0 + c1 * mean
                nxt = now + drift * dt + sig * dZ[m, i]
                X[m, k + 1] = nxt
                if not np.isfinite(nxt):
                    return i
        return -1

    @njit(cache=True)
    def backward_linear_numba(X, Y, terminal, steps, weights, k0, k1, k2, k3, dt, tol, max_iter, gaps):
        B, width = Y.shape
        N = (width - 1) // 2
        xmean = np.zeros((B, N))
        for m in range(B):
            for i in range(N):
                acc = 0.0
                for j in range(steps.shape[0]):
                    if weights[j] != 0.0:
                        acc += weights[j] * X[m, N + i - steps[j]]
                xmean[m, i] = acc
        new = np.empty_like(Y)
        for n in range(max_iter):
            gap = 0.0
            for m in range(B):
                new[m, 2 * N] = terminal[m]
                for i in range(N - 1, -1, -1):
                    k = N + i
                    ymean = 0.0
                    for j in range(steps.shape[0]):
                        if weights[j] != 0.0:
                            ymean += weights[j] * Y[m, k - steps[j]]
                    fval = k0 * Y[m, k] + k1 * ymean + k2 * 0.0 + k3 * xmean[m, i]
                    new[m, k] = new[m, k + 1] + fval * dt
                for k in range(N):
                    new[m, k] = new[m, N]
                for k in range(N, 2 * N + 1):
                    d = abs(new[m, k] - Y[m, k])
                    if d > gap or d != d:
                        gap = d
            for m in range(B):
                for k in range(2 * N + 1):
                    Y[m, k] = new[m, k]
            gaps[n] = gap
            if not np.isfinite(gap):
                return -(n + 1)
            if gap <= tol:
                return n + 1
        return max_iter

else:  # pragma: no cover
    euler_linear_numba = euler_linear_numpy
    backward_linear_numba = backward_linear_numpy


if USE_NUMBA:
    euler_linear = euler_linear_numba
    backward_linear = backward_linear_numba
else:
    euler_linear = euler_linear_numpy
    backward_linear = backward_linear_numpy


def backend() -> str:
    return "numba" if USE_NUMBA else "numpy"
