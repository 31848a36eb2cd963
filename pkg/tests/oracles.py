"""Independent brute-force references used by the tests."""

import numpy as np


def ftrl_grid_exhaustive(A, vhat, gamma, eta, step=1e-4, chunk=400):
    """Exhaustive grid search of the floored FTRL objective on at most three cells."""
    A = np.asarray(A, dtype=float)
    n = vhat.size
    k = int(round(1 / step))
    ticks = np.arange(k + 1) * step
    floor = gamma * vhat

    def objective(W):
        return _objective(W, A, vhat, floor, eta)

    if n == 1:
        return np.ones(1)
    if n == 2:
        W = np.column_stack((ticks, 1 - ticks))
        return W[np.argmin(objective(W))]
    best, best_w = np.inf, None
    for start in range(0, k + 1, chunk):
        i = np.arange(start, min(start + chunk, k + 1))
        ii, jj = np.meshgrid(i, np.arange(k + 1), indexing="ij")
        keep = ii + jj <= k
        w1, w2 = ii[keep] * step, jj[keep] * step
        W = np.column_stack((w1, w2, np.clip(1 - w1 - w2, 0, None)))
        vals = objective(W)
        j = int(np.argmin(vals))
        if vals[j] < best:
            best, best_w = vals[j], W[j]
    return best_w


def _objective(W, A, vhat, floor, eta):
    ok = np.all(W >= floor - 1e-15, axis=-1)
    with np.errstate(divide="ignore", invalid="ignore"):
        kl = np.where(W > 0, W * np.log(W / vhat), 0.0).sum(axis=-1)
        pen = -eta * np.log(W @ A.T).sum(axis=-1) if A.size else 0.0
    val = kl + pen
    return np.where(ok & np.isfinite(val), val, np.inf)


def ftrl_grid(A, vhat, gamma, eta, step=1e-4):
    """Same grid minimizer as ``ftrl_grid_exhaustive``, found row by row.

    With ``w1`` fixed the objective is convex in ``w2``, so its restriction
    to the grid is a discretely convex sequence and bisection on the sign of
    its forward difference finds each row minimum exactly.
    """
    A = np.asarray(A, dtype=float)
    if vhat.size < 3:
        return ftrl_grid_exhaustive(A, vhat, gamma, eta, step)
    k = int(round(1 / step))
    floor = gamma * vhat
    i = np.arange(k + 1)
    w1 = i * step
    # feasible w2 range per row under the floor
    lo = np.full(k + 1, int(np.ceil(floor[1] / step - 1e-9)))
    hi = np.floor((1 - w1 - floor[2]) / step + 1e-9).astype(int)
    hi = np.maximum(hi, lo)

    def f(j):
        w2 = j * step
        W = np.stack((w1, w2, np.clip(1 - w1 - w2, 0, None)), axis=-1)
        return _objective(W, A, vhat, floor, eta)

    # smallest j in [lo, hi] with f(j + 1) >= f(j), or hi
    a, b = lo.copy(), hi.copy()
    while np.any(a < b):
        mid = (a + b) // 2
        up = f(mid + 1) >= f(mid)
        active = a < b
        b = np.where(active & up, mid, b)
        a = np.where(active & ~up, mid + 1, a)
    vals = f(a)
    r = int(np.argmin(vals))
    w = np.array([w1[r], a[r] * step, 1 - w1[r] - a[r] * step])
    return np.clip(w, 0, None)


def trapezoid(f, a, b, n=1_000_000):
    x = np.linspace(a, b, n)
    return np.trapezoid(f(x), x)
