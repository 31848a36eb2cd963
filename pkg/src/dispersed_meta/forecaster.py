"""Exponential forecaster over piecewise-constant losses.

The weight function is never materialized round by round. It is kept as
``init * exp(-lam * cumulative_loss)`` and cell masses are formed on demand,
shifted by the running minimum of the cumulative loss to avoid underflow.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from .piecewise import (
    Density,
    Interval,
    PiecewiseConstant,
    exp_neg_masses,
    pc_add,
    pc_argmin,
    pc_sum,
)

LOSS_TOL = 1e-12


@dataclass(frozen=True)
class ForecasterState:
    domain: Interval
    cumulative_loss: PiecewiseConstant
    init: Density
    lam: float
    round: int = 0

    def cell_masses(self):
        """Shifted cell masses of the current weight on the merged partition."""
        return exp_neg_masses(self.cumulative_loss, self.lam, self.init, shift=True)

    def distribution(self) -> Density:
        """The normalized sampling density ``p_i``."""
        cm = self.cell_masses()
        return Density.from_cells(cm.breakpoints, cm.masses / cm.masses.sum())

    def expected_loss(self, loss: PiecewiseConstant) -> float:
        """Exact expectation of ``loss`` under the current sampling density."""
        return _expectation(self, loss)


def _expectation(state: ForecasterState, loss: PiecewiseConstant, cm=None) -> float:
    cm = state.cell_masses() if cm is None else cm
    # the weight is flat inside each cell, so split cells at the loss's jumps
    bp = np.union1d(cm.breakpoints, loss.breakpoints)
    owner = np.clip(np.searchsorted(cm.breakpoints, bp[:-1], side="right") - 1,
                    0, cm.masses.size - 1)
    frac = np.diff(bp) / np.diff(cm.breakpoints)[owner]
    vals = loss.values[loss.cell_index(bp[:-1])]
    return float(np.dot(cm.masses[owner] * frac, vals) / cm.masses.sum())


@dataclass
class TaskTrace:
    plays: np.ndarray
    incurred: np.ndarray
    opt_value: float
    opt_rho: float
    regret: float
    lam: float
    expected_incurred: np.ndarray = field(default_factory=lambda: np.zeros(0))
    final_state: ForecasterState | None = None

    @property
    def expected_regret(self) -> float:
        """Regret of the forecaster's exact per-round expected losses."""
        return float(self.expected_incurred.sum() - self.opt_value)


def _check_loss(loss: PiecewiseConstant, domain: Interval) -> None:
    if loss.breakpoints[0] != domain.lo or loss.breakpoints[-1] != domain.hi:
        raise ValueError(
            f"loss domain {loss.domain.as_list()} does not match {domain.as_list()}"
        )
    if loss.values.min() < -LOSS_TOL or loss.values.max() > 1 + LOSS_TOL:
        raise ValueError("losses must take values in [0, 1]")


def ef_init(domain: Interval, init: Density, lam: float) -> ForecasterState:
    if not lam > 0:
        raise ValueError(f"step size must be positive, got {lam}")
    if not init.mass > 0:
        raise ValueError("initialization must have positive mass")
    if init.domain != domain:
        raise ValueError("initialization domain does not match")
    return ForecasterState(domain, PiecewiseConstant.constant(domain, 0.0), init, float(lam), 0)


def ef_sample(state: ForecasterState, rng: np.random.Generator, size: int | None = None):
    """Exact inverse-CDF draw: a cell by mass, then uniform inside it.

    Returns a float, or an array of ``size`` independent draws.
    """
    cm = state.cell_masses()
    if size is None:
        return _draw(cm, rng)
    cdf = np.cumsum(cm.masses)
    k = np.searchsorted(cdf, rng.random(size) * cdf[-1], side="right")
    # the last positive-mass cell absorbs u * total landing on or past the end
    last = int(np.flatnonzero(cm.masses > 0)[-1])
    k = np.minimum(k, last)
    lo, hi = cm.breakpoints[k], cm.breakpoints[k + 1]
    return lo + (hi - lo) * rng.random(size)


def _draw(cm, rng: np.random.Generator) -> float:
    cdf = np.cumsum(cm.masses)
    k = int(np.searchsorted(cdf, rng.random() * cdf[-1], side="right"))
    k = min(k, cdf.size - 1)
    while cm.masses[k] <= 0:  # guard against landing on a zero-mass cell at the edge
        k -= 1
    lo, hi = cm.breakpoints[k], cm.breakpoints[k + 1]
    return float(lo + (hi - lo) * rng.random())


def ef_update(state: ForecasterState, loss: PiecewiseConstant) -> ForecasterState:
    _check_loss(loss, state.domain)
    return replace(state, cumulative_loss=pc_add(state.cumulative_loss, loss),
                   round=state.round + 1)


def ball_mass_fraction(init: Density, center: float, radius: float) -> float:
    """Fraction of ``init``'s mass inside ``B(center, radius)``."""
    return init.mass_in(Interval.ball(center, radius)) / init.mass


def theory_step_size(init: Density, losses: Sequence[PiecewiseConstant], beta: float,
                     m: int | None = None, radius_m: int | None = None) -> float:
    """Fixed step size minimizing ``m*lam + log(1/Z)/lam`` for the realized optimum.

    ``Z`` is the init mass fraction of the ``radius_m**-beta`` ball around the
    leftmost minimizer of the summed losses (oracle mode).
    """
    m = len(losses) if m is None else m
    radius_m = m if radius_m is None else radius_m
    _, _, rho = pc_argmin(pc_sum(losses))
    z = ball_mass_fraction(init, rho, radius_m ** (-beta))
    neg_log = -np.log(z) if z > 0 else np.inf
    return float(np.sqrt(max(neg_log, 1e-6) / m))


def ef_run_task(losses: Sequence[PiecewiseConstant], init: Density, lam: float,
                rng: np.random.Generator, keep_state: bool = False) -> TaskTrace:
    """Play one task: sample before each loss is revealed, then update."""
    if len(losses) == 0:
        raise ValueError("a task needs at least one loss")
    state = ef_init(init.domain, init, lam)
    m = len(losses)
    plays = np.empty(m)
    incurred = np.empty(m)
    expected = np.empty(m)
    for i, loss in enumerate(losses):
        _check_loss(loss, state.domain)
        cm = state.cell_masses()
        plays[i] = _draw(cm, rng)
        incurred[i] = loss(plays[i])
        expected[i] = _expectation(state, loss, cm)
        state = ef_update(state, loss)
    _, opt_value, opt_rho = pc_argmin(state.cumulative_loss)
    return TaskTrace(
        plays=plays,
        incurred=incurred,
        opt_value=opt_value,
        opt_rho=opt_rho,
        regret=float(incurred.sum() - opt_value),
        lam=float(lam),
        expected_incurred=expected,
        final_state=state if keep_state else None,
    )
