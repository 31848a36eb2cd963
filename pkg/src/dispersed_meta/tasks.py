"""Parametric greedy algorithms whose costs are exact piecewise-constant losses.

Three families are covered: greedy knapsack scored by ``v / w**rho``,
alpha-Lloyd seeding for clustering, and greedy max-weight independent set
scored by ``w / (1 + deg)**rho``. Each comes with a direct evaluator and a
constructor for the loss as a function of the parameter.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .piecewise import MERGE_TOL, Interval, PiecewiseConstant

SCAN_POINTS = 1024
BISECT_TOL = 1e-9
MAX_HAMMING_K = 8


# -- knapsack ---------------------------------------------------------------

@dataclass(frozen=True)
class KnapsackInstance:
    cap: float
    weights: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        v = np.asarray(self.values, dtype=float)
        if w.shape != v.shape or w.ndim != 1:
            raise ValueError("weights and values must be 1-d arrays of equal length")
        if np.any(w <= 0):
            raise ValueError("item weights must be positive")
        if np.any(v < 0):
            raise ValueError("item values must be nonnegative")
        if not self.cap >= 0:
            raise ValueError("capacity must be nonnegative")
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "values", v)

    @classmethod
    def from_items(cls, cap: float, items) -> "KnapsackInstance":
        items = np.asarray(items, dtype=float).reshape(-1, 2)
        return cls(float(cap), items[:, 0], items[:, 1])

    @property
    def n_items(self) -> int:
        return int(self.weights.size)

    @property
    def total_value(self) -> float:
        return float(self.values.sum())


def _knapsack_values(inst: KnapsackInstance, rhos: np.ndarray) -> np.ndarray:
    """Greedy value for every ``rho`` in ``rhos`` at once."""
    rhos = np.atleast_1d(np.asarray(rhos, dtype=float))
    w, v = inst.weights, inst.values
    with np.errstate(divide="ignore"):
        log_scores = np.log(v)[None, :] - rhos[:, None] * np.log(w)[None, :]
    # stable sort on the negated score puts the lower index first on ties
    order = np.argsort(-log_scores, axis=1, kind="stable")
    remaining = np.full(rhos.size, inst.cap)
    value = np.zeros(rhos.size)
    for j in range(w.size):
        idx = order[:, j]
        take = w[idx] <= remaining
        remaining = np.where(take, remaining - w[idx], remaining)
        value = np.where(take, value + v[idx], value)
    return value


def greedy_knapsack(inst: KnapsackInstance, rho: float) -> tuple[set[int], float]:
    """Add items by decreasing ``v / w**rho``, skipping any that overflow."""
    if rho < 0:
        raise ValueError("rho must be nonnegative")
    with np.errstate(divide="ignore"):
        log_scores = np.log(inst.values) - rho * np.log(inst.weights)
    order = np.argsort(-log_scores, kind="stable")
    remaining = inst.cap
    selected: set[int] = set()
    value = 0.0
    for i in order:
        if inst.weights[i] <= remaining:
            remaining -= inst.weights[i]
            value += inst.values[i]
            selected.add(int(i))
    return selected, float(value)


def _dedupe(points: np.ndarray, domain: Interval) -> np.ndarray:
    points = np.sort(points[(points > domain.lo) & (points < domain.hi)])
    if points.size == 0:
        return points
    keep = np.concatenate(([True], np.diff(points) > MERGE_TOL))
    points = points[keep]
    # keep cuts clear of the domain ends
    inner = (points - domain.lo > MERGE_TOL) & (domain.hi - points > MERGE_TOL)
    return points[inner]


def knapsack_critical_rhos(inst: KnapsackInstance, domain: Interval) -> np.ndarray:
    """Parameters at which two items swap places in the greedy order."""
    if domain.lo < 0:
        raise ValueError("domain must lie within [0, inf)")
    w, v = inst.weights, inst.values
    i, j = np.triu_indices(w.size, k=1)
    ok = (w[i] != w[j]) & (v[i] > 0) & (v[j] > 0)
    i, j = i[ok], j[ok]
    rho = np.log(v[i] / v[j]) / np.log(w[i] / w[j])
    return _dedupe(rho, domain)


def _loss_from_cuts(cuts: np.ndarray, domain: Interval,
                    evaluate: Callable[[np.ndarray], np.ndarray]) -> PiecewiseConstant:
    bp = np.concatenate(([domain.lo], cuts, [domain.hi]))
    mids = 0.5 * (bp[:-1] + bp[1:])
    return PiecewiseConstant(bp, evaluate(mids)).normalize()


def knapsack_loss(inst: KnapsackInstance, domain: Interval) -> PiecewiseConstant:
    """``1 - value(rho) / sum(v)`` as a piecewise-constant function of ``rho``."""
    if domain.lo < 0 or domain.hi > 10:
        raise ValueError("knapsack domain must lie within [0, 10]")
    total = inst.total_value
    if total <= 0:
        return PiecewiseConstant.constant(domain, 0.0)
    cuts = knapsack_critical_rhos(inst, domain)
    loss = _loss_from_cuts(cuts, domain, lambda r: 1.0 - _knapsack_values(inst, r) / total)
    return loss.clip(0.0, 1.0)


def _positive_normal(rng: np.random.Generator, mean, sd: float, size: int) -> np.ndarray:
    out = rng.normal(mean, sd, size)
    while np.any(out <= 0):
        bad = out <= 0
        out[bad] = rng.normal(np.broadcast_to(mean, out.shape)[bad], sd)
    return out


def knapsack_gen(w_t: float, rng: np.random.Generator, cap: float = 100.0,
                 n_heavy: int = 10, n_light: int = 40, sd: float = 0.5) -> KnapsackInstance:
    """Heavy items ``N(27, sd)`` in weight and value, light ones shifted by ``w_t``."""
    if not 0 <= w_t <= 2:
        raise ValueError(f"task shift w_t must lie in [0, 2], got {w_t}")
    heavy_w = _positive_normal(rng, 27.0, sd, n_heavy)
    heavy_v = _positive_normal(rng, 27.0, sd, n_heavy)
    light_w = _positive_normal(rng, 19.0 + w_t, sd, n_light)
    light_v = _positive_normal(rng, 18.0, sd, n_light)
    return KnapsackInstance(cap, np.concatenate((heavy_w, light_w)),
                            np.concatenate((heavy_v, light_v)))


# -- clustering -------------------------------------------------------------

@dataclass(frozen=True)
class ClusterDataset:
    points: np.ndarray
    truth: np.ndarray
    k: int

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        truth = np.asarray(self.truth, dtype=int)
        if pts.ndim != 2 or pts.shape[0] != truth.size:
            raise ValueError("points must be (n, dim) with one label per point")
        if truth.size and (truth.min() < 0 or truth.max() >= self.k):
            raise ValueError("labels must lie in range(k)")
        if pts.shape[0] < self.k:
            raise ValueError("need at least k points")
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "truth", truth)

    @property
    def n(self) -> int:
        return int(self.points.shape[0])


def gaussian_mixture_gen(d: float, sigma: float, rng: np.random.Generator,
                         per_class: int = 100) -> ClusterDataset:
    """Two classes with covariance ``diag(sigma, 2 sigma)`` centred at 0 and ``(d sigma, 0)``."""
    if not sigma > 0:
        raise ValueError("sigma must be positive")
    if not 2 <= d <= 3:
        raise ValueError(f"separation d must lie in [2, 3], got {d}")
    scale = np.sqrt([sigma, 2 * sigma])
    c0 = rng.normal(size=(per_class, 2)) * scale
    c1 = rng.normal(size=(per_class, 2)) * scale + np.array([d * sigma, 0.0])
    truth = np.repeat([0, 1], per_class)
    return ClusterDataset(np.vstack([c0, c1]), truth, 2)


def hamming_loss(pred, truth, k: int) -> float:
    """Mismatch fraction minimized over relabelings of ``pred``."""
    if k > MAX_HAMMING_K:
        raise ValueError(f"k = {k} exceeds {MAX_HAMMING_K}; permutation search is factorial")
    pred = np.asarray(pred, dtype=int)
    truth = np.asarray(truth, dtype=int)
    if pred.shape != truth.shape:
        raise ValueError("pred and truth must have the same length")
    if pred.size == 0:
        return 0.0
    conf = np.zeros((k, k), dtype=int)
    np.add.at(conf, (pred, truth), 1)
    best = max(sum(conf[i, p[i]] for i in range(k)) for p in itertools.permutations(range(k)))
    return float(1.0 - best / pred.size)


def _min_dists(points: np.ndarray, centers: Sequence[int]) -> np.ndarray:
    diff = points[:, None, :] - points[list(centers)][None, :, :]
    return np.sqrt((diff**2).sum(axis=2)).min(axis=1)


def _next_center(log_d: np.ndarray, alphas: np.ndarray, u: float) -> np.ndarray:
    """Index sampled by inverse CDF for every alpha; zero-distance points get no weight."""
    alphas = np.atleast_1d(alphas)
    finite = np.isfinite(log_d)
    expo = np.where(finite[None, :], alphas[:, None] * np.where(finite, log_d, 0.0)[None, :], -np.inf)
    expo -= expo.max(axis=1, keepdims=True)
    p = np.exp(expo)
    cdf = np.cumsum(p, axis=1)
    cdf /= cdf[:, -1:]
    idx = (cdf > u).argmax(axis=1)
    # rounding can leave the last entry at u; fall back to the last positive-weight point
    last = np.flatnonzero(finite)[-1]
    return np.where(cdf[:, -1] > u, idx, last)


def _log_dists(data: ClusterDataset, centers: Sequence[int]) -> np.ndarray:
    d = _min_dists(data.points, centers)
    if not np.any(d > 0):
        raise ValueError("all remaining points coincide with chosen centers")
    with np.errstate(divide="ignore"):
        return np.log(d)


def _assign(data: ClusterDataset, centers: Sequence[int]) -> np.ndarray:
    diff = data.points[:, None, :] - data.points[list(centers)][None, :, :]
    return (diff**2).sum(axis=2).argmin(axis=1)


def lloyd_seed(data: ClusterDataset, alpha: float, u: Sequence[float]) -> list[int]:
    """Seed ``k`` centers with ``d**alpha`` sampling driven by the fixed uniforms ``u``."""
    if len(u) != data.k:
        raise ValueError(f"need {data.k} uniforms, got {len(u)}")
    centers = [min(int(math.floor(u[0] * data.n)), data.n - 1)]
    for j in range(1, data.k):
        log_d = _log_dists(data, centers)
        centers.append(int(_next_center(log_d, np.array([alpha]), u[j])[0]))
    return centers


def lloyd_seed_direct_loss(data: ClusterDataset, alpha: float, u: Sequence[float]) -> float:
    centers = lloyd_seed(data, alpha, u)
    return hamming_loss(_assign(data, centers), data.truth, data.k)


def _segment(f: Callable[[np.ndarray], np.ndarray], a: float, b: float,
             n_grid: int = SCAN_POINTS, tol: float = BISECT_TOL):
    """Split ``[a, b]`` where the integer-valued ``f`` changes.

    Scans a grid and bisects each sign change down to ``tol``. Returns the
    cut points and the label on each resulting piece.
    """
    xs = np.linspace(a, b, n_grid + 1)
    ys = f(xs)
    cuts: list[float] = []
    labels = [int(ys[0])]
    for i in np.flatnonzero(ys[1:] != ys[:-1]):
        lo, cur = xs[i], int(ys[i])
        target = int(ys[i + 1])
        while cur != target:
            hi = xs[i + 1]
            while hi - lo > tol:
                mid = 0.5 * (lo + hi)
                if int(f(np.array([mid]))[0]) == cur:
                    lo = mid
                else:
                    hi = mid
            cuts.append(float(hi))
            cur = int(f(np.array([hi]))[0])
            labels.append(cur)
            lo = hi
    return cuts, labels


def lloyd_seed_loss(data: ClusterDataset, alpha_domain: Interval,
                    shared_u: Sequence[float]) -> PiecewiseConstant:
    """Hamming loss of seeding plus nearest-center assignment, as a function of alpha."""
    if alpha_domain.lo < 0 or alpha_domain.hi > 10:
        raise ValueError("alpha domain must lie within [0, 10]")
    if len(shared_u) != data.k:
        raise ValueError(f"need {data.k} uniforms, got {len(shared_u)}")
    first = min(int(math.floor(shared_u[0] * data.n)), data.n - 1)
    bps: list[float] = []
    vals: list[float] = []

    def recurse(a: float, b: float, centers: list[int]) -> None:
        if len(centers) == data.k:
            vals.append(hamming_loss(_assign(data, centers), data.truth, data.k))
            bps.append(b)
            return
        log_d = _log_dists(data, centers)
        u = shared_u[len(centers)]
        cuts, labels = _segment(lambda al: _next_center(log_d, al, u), a, b)
        edges = [a, *cuts, b]
        for lo, hi, c in zip(edges[:-1], edges[1:], labels):
            recurse(lo, hi, centers + [c])

    recurse(alpha_domain.lo, alpha_domain.hi, [first])
    return PiecewiseConstant([alpha_domain.lo, *bps], vals).normalize()


# -- max-weight independent set --------------------------------------------

@dataclass(frozen=True)
class WeightedGraph:
    n: int
    edges: frozenset
    weights: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        if w.size != self.n:
            raise ValueError("need one weight per vertex")
        if np.any(w <= 0) or np.any(w > 1):
            raise ValueError("vertex weights must lie in (0, 1]")
        edges = frozenset(tuple(sorted(e)) for e in self.edges)
        for a, b in edges:
            if a == b:
                raise ValueError("self-loops are not allowed")
            if not (0 <= a < self.n and 0 <= b < self.n):
                raise ValueError(f"edge ({a}, {b}) out of range")
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "edges", edges)

    def adjacency(self) -> np.ndarray:
        adj = np.zeros((self.n, self.n), dtype=bool)
        for a, b in self.edges:
            adj[a, b] = adj[b, a] = True
        return adj


def mwis_greedy(g: WeightedGraph, rho: float) -> tuple[set[int], float]:
    """Pick the best ``w / (1 + deg)**rho`` vertex in the residual graph, drop its neighbours."""
    adj = g.adjacency()
    alive = np.ones(g.n, dtype=bool)
    log_w = np.log(g.weights)
    selected: set[int] = set()
    while alive.any():
        deg = (adj & alive[None, :]).sum(axis=1)
        score = np.where(alive, log_w - rho * np.log1p(deg), -np.inf)
        v = int(np.argmax(score))
        selected.add(v)
        alive[v] = False
        alive &= ~adj[v]
    return selected, float(g.weights[list(selected)].sum())


def mwis_critical_rhos(g: WeightedGraph, domain: Interval) -> np.ndarray:
    """Every score-equality point over all vertex pairs and all residual degree pairs."""
    i, j = np.triu_indices(g.n, k=1)
    lw = np.log(g.weights[i] / g.weights[j])
    degs = np.arange(g.n)
    da, db = np.meshgrid(degs, degs, indexing="ij")
    mask = da != db
    ld = np.log1p(da[mask]) - np.log1p(db[mask])
    rho = (lw[:, None] / ld[None, :]).ravel()
    return _dedupe(rho, domain)


def mwis_loss(g: WeightedGraph, domain: Interval) -> PiecewiseConstant:
    """``1 - weight(rho) / sum(w)`` for the residual-degree greedy."""
    if domain.lo < 0 or domain.hi > 10:
        raise ValueError("MWIS domain must lie within [0, 10]")
    total = float(g.weights.sum())

    def evaluate(rhos):
        return np.array([1.0 - mwis_greedy(g, r)[1] / total for r in rhos])

    loss = _loss_from_cuts(mwis_critical_rhos(g, domain), domain, evaluate)
    return _subdivide(loss, evaluate).clip(0.0, 1.0)


def _subdivide(loss: PiecewiseConstant, evaluate, tol: float = BISECT_TOL) -> PiecewiseConstant:
    """Split any cell on which three interior probes disagree with its value."""
    bp, vals = [loss.breakpoints[0]], []
    for k in range(loss.n_cells):
        a, b = loss.breakpoints[k], loss.breakpoints[k + 1]
        _refine_cell(a, b, loss.values[k], evaluate, tol, bp, vals)
    return PiecewiseConstant(bp, vals).normalize()


def _refine_cell(a, b, value, evaluate, tol, bp, vals):
    probes = a + (b - a) * np.array([0.25, 0.5, 0.75])
    got = evaluate(probes)
    if np.all(got == value) or b - a <= tol:
        bp.append(b)
        vals.append(value)
        return
    mid = 0.5 * (a + b)
    _refine_cell(a, mid, float(evaluate([0.5 * (a + mid)])[0]), evaluate, tol, bp, vals)
    _refine_cell(mid, b, float(evaluate([0.5 * (mid + b)])[0]), evaluate, tol, bp, vals)


def mwis_gen(n: int, p: float, base_weights: np.ndarray, rng: np.random.Generator,
             noise: float = 0.05) -> WeightedGraph:
    """Erdos-Renyi graph with per-instance jitter on the task's base weights."""
    if not 0 <= p <= 1:
        raise ValueError("edge probability must lie in [0, 1]")
    i, j = np.triu_indices(n, k=1)
    keep = rng.random(i.size) < p
    w = np.clip(np.asarray(base_weights) + rng.normal(0.0, noise, n), 1e-3, 1.0)
    return WeightedGraph(n, frozenset(zip(i[keep].tolist(), j[keep].tolist())), w)
