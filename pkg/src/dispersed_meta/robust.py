"""Perturbed online learning: dispersed attacks, dual regret and lower-bound sequences."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .piecewise import MERGE_TOL, Interval, PiecewiseConstant, pc_argmin, pc_sum

MIN_LEVEL_WIDTH = 1e-9


@dataclass(frozen=True)
class Attack:
    center: float
    delta: float
    bump: PiecewiseConstant

    def __post_init__(self):
        if self.delta < 0:
            raise ValueError("attack radius must be nonnegative")
        support = Interval.ball(self.center, self.delta)
        bp, vals = self.bump.breakpoints, self.bump.values
        inside = (bp[:-1] >= support.lo - MERGE_TOL) & (bp[1:] <= support.hi + MERGE_TOL)
        if np.any(vals[~inside] != 0):
            raise ValueError("attack bump must vanish outside its ball")

    @classmethod
    def zero(cls, domain: Interval, center: float | None = None) -> "Attack":
        c = domain.midpoint if center is None else center
        return cls(c, 0.0, PiecewiseConstant.constant(domain, 0.0))

    @property
    def is_zero(self) -> bool:
        return bool(np.all(self.bump.values == 0))


@dataclass(frozen=True)
class PerturbedRound:
    true_loss: PiecewiseConstant
    attack: Attack
    perturbed: PiecewiseConstant = field(init=False)
    clipped: bool = field(init=False)

    def __post_init__(self):
        if self.attack.is_zero:
            object.__setattr__(self, "clipped", False)
            object.__setattr__(self, "perturbed", self.true_loss)
            return
        raw = self.true_loss + self.attack.bump
        object.__setattr__(self, "clipped", bool(raw.min() < 0 or raw.max() > 1))
        object.__setattr__(self, "perturbed", raw.clip(0.0, 1.0).normalize())


def threshold_loss(domain: Interval, x: float, b: int) -> PiecewiseConstant:
    """``1[rho > x]`` for ``b = 0`` and ``1[rho <= x]`` for ``b = 1``.

    Cells are closed on the left, so the value exactly at ``x`` belongs to
    the right piece.
    """
    if b not in (0, 1):
        raise ValueError("b must be 0 or 1")
    left, right = (0.0, 1.0) if b == 0 else (1.0, 0.0)
    return PiecewiseConstant.step(domain, x, left, right)


def dispersed_attack_gen(m: int, beta_a: float, domain: Interval, height: float,
                         rng: np.random.Generator) -> list[Attack]:
    """Rectangular bumps of radius ``m**-beta_a`` at uniformly drawn centers."""
    if not beta_a > 0:
        raise ValueError("beta_a must be positive")
    if not 0 <= height <= 1:
        raise ValueError("height must lie in [0, 1]")
    delta = float(m ** (-beta_a))
    centers = rng.uniform(domain.lo, domain.hi, m)
    return [Attack(float(c), delta,
                   PiecewiseConstant.indicator(domain, Interval.ball(c, delta), height))
            for c in centers]


@dataclass
class HalvingTrace:
    losses: list[PiecewiseConstant]
    xs: np.ndarray
    bs: np.ndarray
    n_bulk: int
    n_halving: int
    levels: int
    final_interval: Interval


def _halving_rounds(domain: Interval, start: Interval, n_rounds: int,
                    rng: np.random.Generator, min_width: float = MIN_LEVEL_WIDTH):
    """Thresholds at the midpoint of a shrinking interval with fair-coin sides.

    Doubles cannot resolve more than a few dozen bisections, so the rounds
    are spread over at most as many levels as keep the interval wider than
    ``min_width``; rounds on one level repeat the same threshold.
    """
    if n_rounds <= 0:
        return [], [], [], 0, start
    depth = max(int(math.floor(math.log2(start.width / min_width))), 1)
    levels = min(n_rounds, depth)
    reps = np.full(levels, n_rounds // levels)
    reps[: n_rounds % levels] += 1
    lo, hi = start.lo, start.hi
    losses, xs, bs = [], [], []
    for r in reps:
        x = 0.5 * (lo + hi)
        b = int(rng.integers(2))
        f = threshold_loss(domain, x, b)
        losses += [f] * int(r)
        xs += [x] * int(r)
        bs += [b] * int(r)
        lo, hi = (lo, x) if b == 0 else (x, hi)
    return losses, xs, bs, levels, Interval(lo, hi)


def halving_losses(m: int, beta: float, D_star: float, a: float, domain: Interval,
                   rng: np.random.Generator) -> HalvingTrace:
    """Lower-bound sequence: antithetic bulk thresholds, then the halving adversary.

    Bulk rounds come in pairs ``(x, 0), (x, 1)`` with ``x`` in the middle
    third of ``[a, a + D_star]``, so every pair sums to one everywhere. The
    last ``ceil(3 / D_star * m**(1 - beta))`` rounds halve the interval that
    holds the optimum in hindsight.
    """
    if not beta > 0 or not D_star > 0:
        raise ValueError("beta and D_star must be positive")
    if not m > (3.0 / D_star) ** (1.0 / beta):
        raise ValueError(f"m = {m} too small; need m > (3 / D_star)^(1 / beta)")
    ball = Interval(a, a + D_star)
    if ball.clip(domain) != ball:
        raise ValueError("[a, a + D_star] must lie inside the domain")
    n_h = min(int(math.ceil(3.0 / D_star * m ** (1.0 - beta))), m)
    n_bulk = m - n_h
    if n_bulk % 2:
        n_bulk -= 1
        n_h += 1
    mid = Interval(a + D_star / 3, a + 2 * D_star / 3)
    losses, xs, bs = [], [], []
    for x in rng.uniform(mid.lo, mid.hi, n_bulk // 2):
        losses += [threshold_loss(domain, x, 0), threshold_loss(domain, x, 1)]
        xs += [x, x]
        bs += [0, 1]
    h_losses, h_xs, h_bs, levels, final = _halving_rounds(domain, mid, n_h, rng)
    return HalvingTrace(losses + h_losses, np.array(xs + h_xs), np.array(bs + h_bs, dtype=int),
                        n_bulk, n_h, levels, final)


@dataclass
class RobustTrace:
    rounds: list[PerturbedRound]
    phase_lengths: tuple[int, int, int]
    interval: Interval

    @property
    def true_losses(self) -> list[PiecewiseConstant]:
        return [r.true_loss for r in self.rounds]

    @property
    def perturbed(self) -> list[PiecewiseConstant]:
        return [r.perturbed for r in self.rounds]

    @property
    def attacks(self) -> list[Attack]:
        return [r.attack for r in self.rounds]

    @property
    def any_clipped(self) -> bool:
        return any(r.clipped for r in self.rounds)


def robust_lb_sequence(m: int, beta: float, beta_a: float, rng: np.random.Generator,
                       domain: Interval = Interval(0.0, 1.0), c: float = 1.0) -> RobustTrace:
    """True and perturbed losses separating true from perturbed regret.

    Phase one halves the domain until the optimum interval ``I`` is no wider
    than ``m**-beta``. Phase two keeps halving inside ``I`` for
    ``ceil(c * m**(1 - beta_a))`` rounds while each attack cancels the true
    loss on ``I``. Remaining rounds carry zero loss.
    """
    if not beta > 0 or not beta_a > 0:
        raise ValueError("beta and beta_a must be positive")
    radius = m ** (-beta)
    n1 = max(int(math.ceil(c * m ** (1.0 - beta))),
             int(math.ceil(math.log2(domain.width / radius))) + 1)
    n1 = min(n1, m)
    true, _, _, _, interval = _halving_rounds(domain, domain, n1, rng)
    attacks = [Attack.zero(domain) for _ in true]
    n2 = 0
    if beta_a < beta:
        n2 = min(int(math.ceil(c * m ** (1.0 - beta_a))), m - n1)
        phase2, _, _, _, _ = _halving_rounds(domain, interval, n2, rng)
        on_I = PiecewiseConstant.indicator(domain, interval)
        for f in phase2:
            # signed bump equal to minus the true loss on I
            bump = (on_I * f).scale(-1.0)
            true.append(f)
            attacks.append(Attack(interval.midpoint, interval.width / 2, bump))
    n3 = m - n1 - n2
    zero = PiecewiseConstant.constant(domain, 0.0)
    true += [zero] * n3
    attacks += [Attack.zero(domain) for _ in range(n3)]
    rounds = [PerturbedRound(f, a) for f, a in zip(true, attacks)]
    return RobustTrace(rounds, (n1, n2, n3), interval)


def dual_regret(plays: Sequence[float], rounds: Sequence[PerturbedRound]) -> tuple[float, float]:
    """Regret of ``plays`` against the true and against the perturbed losses."""
    if len(plays) != len(rounds):
        raise ValueError("need one play per round")
    if len(rounds) == 0:
        return 0.0, 0.0
    true_sum = pc_sum([r.true_loss for r in rounds])
    pert_sum = pc_sum([r.perturbed for r in rounds])
    incurred = sum(r.true_loss(x) for x, r in zip(plays, rounds))
    incurred_p = sum(r.perturbed(x) for x, r in zip(plays, rounds))
    R = incurred - pc_argmin(true_sum)[1]
    R_tilde = incurred_p - pc_argmin(pert_sum)[1]
    return float(R), float(R_tilde)


def decomposition_bound(rounds: Sequence[PerturbedRound], R_tilde: float,
                        plays: Sequence[float] | None = None) -> float:
    """``R_tilde + sum a_i(x~*) + |L(x~*) - L(x*)|`` with ``L`` the summed true loss.

    The inequality ``R <= bound`` needs ``l~_i >= l_i``, which holds for
    nonnegative attacks. For signed attacks pass ``plays``: the bound then
    adds ``sum (l_i(x_i) - l~_i(x_i))_+`` and uses the realized perturbation
    ``l~_i - l_i`` at ``x~*`` where it exceeds ``a_i``. Both extras vanish
    for nonnegative attacks.
    """
    true_sum = pc_sum([r.true_loss for r in rounds])
    pert_sum = pc_sum([r.perturbed for r in rounds])
    _, _, x_tilde = pc_argmin(pert_sum)
    _, true_opt, _ = pc_argmin(true_sum)
    attack_mass = sum(max(r.attack.bump(x_tilde), r.perturbed(x_tilde) - r.true_loss(x_tilde))
                      for r in rounds)
    bound = R_tilde + attack_mass + abs(true_sum(x_tilde) - true_opt)
    if plays is not None:
        if len(plays) != len(rounds):
            raise ValueError("need one play per round")
        bound += sum(max(r.true_loss(x) - r.perturbed(x), 0.0) for x, r in zip(plays, rounds))
    return float(bound)
