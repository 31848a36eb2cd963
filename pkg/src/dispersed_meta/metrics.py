"""Overlap, task-similarity, dispersion and regret summaries."""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np

from .meta_init import CellPartition, ball_matrix, clip_ball, refine
from .piecewise import Density, Interval, PiecewiseConstant
from .simplex import exponentiated_gradient


@dataclass(frozen=True)
class DispersionReport:
    eps: float
    max_window_count: int
    total_discontinuities: int
    windows_scanned: int


class TaskSimilarity(NamedTuple):
    v_squared: float
    density: Density
    gap: float

    @property
    def v(self) -> float:
        return float(np.sqrt(max(self.v_squared, 0.0)))


def neg_log_overlap(w: Density, ball: Interval) -> float:
    """``-log`` of the fraction of ``w``'s mass inside ``ball``; ``inf`` if that is zero."""
    clip_ball(ball, w.domain)
    if not w.mass > 0:
        raise ValueError("density must have positive mass")
    z = w.mass_in(ball) / w.mass
    if z <= 0:
        return float("inf")
    return float(-np.log(min(z, 1.0)))


def task_similarity(balls: Sequence[Interval], domain: Interval,
                    tol: float = 1e-12, max_iter: int = 200_000) -> TaskSimilarity:
    """Minimize the average negative log-overlap over densities on ``domain``.

    The minimizer is constant on the cells cut by the ball endpoints, so the
    search runs over the simplex on those cells.
    """
    if len(balls) == 0:
        raise ValueError("need at least one ball")
    balls = [clip_ball(b, domain) for b in balls]
    partition = CellPartition(domain)
    for b in balls:
        partition = refine(partition, b)
    A = ball_matrix(partition, balls)
    T = A.shape[0]

    def fun(w):
        s = A @ w
        if np.any(s <= 0):
            return np.inf
        return float(-np.sum(np.log(s)) / T)

    def grad(w):
        return -(A.T @ (1.0 / (A @ w))) / T

    # start on cells covered by at least one ball
    covered = A.sum(axis=0) > 0
    x0 = np.where(covered, partition.widths, 0.0)
    res = exponentiated_gradient(fun, grad, x0, tol=tol, max_iter=max_iter)
    density = Density.from_cells(partition.breakpoints, res.x)
    return TaskSimilarity(res.fun, density, res.gap)


def discontinuities(loss: PiecewiseConstant) -> np.ndarray:
    return loss.normalize().interior_breakpoints


def dispersion_count(losses: Sequence[PiecewiseConstant], eps: float) -> DispersionReport:
    """Largest number of functions with a jump inside one closed window of width ``eps``."""
    if not eps > 0:
        raise ValueError("eps must be positive")
    locs, owners = [], []
    for i, f in enumerate(losses):
        d = discontinuities(f)
        locs.append(d)
        owners.append(np.full(d.size, i))
    if not locs or sum(a.size for a in locs) == 0:
        return DispersionReport(eps, 0, 0, 0)
    x = np.concatenate(locs)
    who = np.concatenate(owners)
    order = np.argsort(x, kind="stable")
    x, who = x[order], who[order]
    n = x.size
    counts: Counter = Counter()
    best = 0
    hi = 0
    for lo in range(n):
        while hi < n and x[hi] - x[lo] <= eps:
            counts[who[hi]] += 1
            hi += 1
        best = max(best, len(counts))
        counts[who[lo]] -= 1
        if counts[who[lo]] == 0:
            del counts[who[lo]]
    return DispersionReport(eps, best, n, n)


def task_averaged_regret(regrets: Sequence[float]) -> float:
    if len(regrets) == 0:
        raise ValueError("need at least one task regret")
    return float(np.mean(regrets))
