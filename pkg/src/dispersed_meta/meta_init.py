"""Adaptive discretization and the KL-regularized FTRL initializer.

The iterate is solved on the partition cut by the observed optimum balls
only; cells added later never change aggregate masses of the current
solution, so the partition can grow task by task.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .piecewise import MERGE_TOL, Density, Interval
from .simplex import exponentiated_gradient

GAMMA_CAP = 0.5


class NotRefinedError(ValueError):
    """Raised when a ball cuts through a cell of the partition."""


@dataclass(frozen=True)
class CellPartition:
    domain: Interval
    cuts: tuple[float, ...] = ()

    @property
    def breakpoints(self) -> np.ndarray:
        return np.array([self.domain.lo, *self.cuts, self.domain.hi])

    @property
    def widths(self) -> np.ndarray:
        return np.diff(self.breakpoints)

    @property
    def n_cells(self) -> int:
        return len(self.cuts) + 1

    @property
    def cells(self) -> list[Interval]:
        bp = self.breakpoints
        return [Interval(float(bp[k]), float(bp[k + 1])) for k in range(bp.size - 1)]

    def uniform_probs(self) -> np.ndarray:
        return self.widths / self.domain.width


@dataclass
class BallHistory:
    balls: list[Interval] = field(default_factory=list)

    def append(self, ball: Interval) -> None:
        if ball.width <= MERGE_TOL:
            raise ValueError("balls must have positive width after clipping")
        self.balls.append(ball)

    def __len__(self):
        return len(self.balls)

    def __iter__(self):
        return iter(self.balls)


@dataclass(frozen=True)
class CellDistribution:
    partition: CellPartition
    probs: np.ndarray
    gamma: float
    n_iter: int = 0
    gap: float = 0.0

    def floor_violation(self) -> float:
        """Largest amount by which a cell falls below ``gamma * vhat``."""
        return float(np.max(self.gamma * self.partition.uniform_probs() - self.probs))


def clip_ball(ball: Interval, domain: Interval) -> Interval:
    clipped = ball.clip(domain)
    if clipped is None or clipped.width <= MERGE_TOL:
        raise ValueError(f"ball {ball.as_list()} does not overlap {domain.as_list()}")
    return clipped


def refine(partition: CellPartition, ball: Interval) -> CellPartition:
    """Add the clipped endpoints of ``ball`` as cuts; existing cuts never move."""
    ball = clip_ball(ball, partition.domain)
    cuts = list(partition.cuts)
    for x in (ball.lo, ball.hi):
        if x - partition.domain.lo <= MERGE_TOL or partition.domain.hi - x <= MERGE_TOL:
            continue
        if cuts and np.min(np.abs(np.asarray(cuts) - x)) <= MERGE_TOL:
            continue
        cuts.append(float(x))
    return CellPartition(partition.domain, tuple(sorted(cuts)))


def indicator_vector(partition: CellPartition, ball: Interval) -> np.ndarray:
    """1 for cells inside ``ball``, 0 for cells outside it."""
    ball = clip_ball(ball, partition.domain)
    bp = partition.breakpoints
    lo, hi = bp[:-1], bp[1:]
    inside = (lo >= ball.lo - MERGE_TOL) & (hi <= ball.hi + MERGE_TOL)
    outside = (hi <= ball.lo + MERGE_TOL) | (lo >= ball.hi - MERGE_TOL)
    if not np.all(inside | outside):
        k = int(np.flatnonzero(~(inside | outside))[0])
        raise NotRefinedError(
            f"cell [{lo[k]}, {hi[k]}] straddles ball {ball.as_list()}; refine first"
        )
    return inside.astype(float)


def ball_matrix(partition: CellPartition, balls) -> np.ndarray:
    """Stack of indicator vectors, one row per ball."""
    if len(balls) == 0:
        return np.zeros((0, partition.n_cells))
    return np.vstack([indicator_vector(partition, b) for b in balls])


def ftrl_objective(w: np.ndarray, A: np.ndarray, vhat: np.ndarray, eta: float) -> float:
    """``KL(w || vhat) - eta * sum_s log <A_s, w>``."""
    overlaps = A @ w
    if np.any(overlaps <= 0):
        return np.inf
    pos = w > 0
    kl = float(np.sum(w[pos] * np.log(w[pos] / vhat[pos])))
    return kl - eta * float(np.sum(np.log(overlaps)))


def ftrl_update(history, partition: CellPartition, gamma: float, eta: float,
                tol: float = 1e-13, max_iter: int = 100_000) -> CellDistribution:
    """Minimize the FTRL objective over distributions with floor ``gamma * vhat``.

    Solved as ``w = gamma * vhat + (1 - gamma) * z`` with ``z`` on the plain
    simplex, by exponentiated gradient with backtracking.
    """
    if gamma > 1:
        raise ValueError(f"gamma must be at most 1, got {gamma}")
    if gamma < 0:
        raise ValueError(f"gamma must be nonnegative, got {gamma}")
    if not eta > 0:
        raise ValueError(f"eta must be positive, got {eta}")
    vhat = partition.uniform_probs()
    balls = list(history)
    if not balls or gamma == 1:
        return CellDistribution(partition, vhat.copy(), gamma)
    A = ball_matrix(partition, balls)

    def to_w(z):
        return gamma * vhat + (1 - gamma) * z

    def fun(z):
        return ftrl_objective(to_w(z), A, vhat, eta)

    def grad(z):
        w = to_w(z)
        g_w = np.log(np.where(w > 0, w, 1e-300) / vhat) + 1.0 - eta * (A.T @ (1.0 / (A @ w)))
        return (1 - gamma) * g_w

    res = exponentiated_gradient(fun, grad, vhat, tol=tol, max_iter=max_iter)
    w = to_w(res.x)
    w = w / w.sum()
    return CellDistribution(partition, w, gamma, res.n_iter, res.gap)


def to_density(dist: CellDistribution) -> Density:
    """Density constant on each cell with value ``probs[k] / width[k]``."""
    return Density.from_cells(dist.partition.breakpoints, dist.probs)


def aggregate(dist: CellDistribution, coarse: CellPartition) -> np.ndarray:
    """Masses of ``dist`` summed onto the cells of a coarser partition."""
    fine_bp = dist.partition.breakpoints
    coarse_bp = coarse.breakpoints
    mids = 0.5 * (fine_bp[:-1] + fine_bp[1:])
    owner = np.clip(np.searchsorted(coarse_bp, mids, side="right") - 1, 0, coarse.n_cells - 1)
    return np.bincount(owner, weights=dist.probs, minlength=coarse.n_cells)


def theory_gamma_eta(T: int, B: float, G: float) -> tuple[float, float, bool]:
    """Floor and step size from ``gamma^2 = G B / sqrt(T)``, ``eta^2 = B^2 gamma^2 / (T G^2)``.

    ``gamma`` is capped at ``GAMMA_CAP``; the returned flag records whether
    the cap was hit.
    """
    gamma = np.sqrt(G * B / np.sqrt(T))
    capped = bool(gamma > GAMMA_CAP)
    gamma = min(gamma, GAMMA_CAP)
    eta = np.sqrt(B**2 * gamma**2 / (T * G**2))
    return float(gamma), float(eta), capped


def estimate_G(balls, domain: Interval) -> float:
    """Root mean of ``1 / vol(C_t)^2`` with volumes relative to the domain."""
    vols = np.array([b.width for b in balls]) / domain.width
    return float(np.sqrt(np.mean(1.0 / vols**2)))
