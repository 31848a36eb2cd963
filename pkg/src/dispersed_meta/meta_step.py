"""Step-size learners and the full meta-learning loop."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Literal, Sequence

import numpy as np

from .forecaster import TaskTrace, ef_run_task, theory_step_size
from .meta_init import (
    BallHistory,
    CellDistribution,
    CellPartition,
    clip_ball,
    ftrl_update,
    refine,
    to_density,
)
from .metrics import task_averaged_regret
from .piecewise import Density, Interval, PiecewiseConstant
from .quadrature import adaptive_simpson

StepVariant = Literal["ftl", "ewoo"]
LamMode = Literal["meta", "theory-fixed"]


@dataclass(frozen=True)
class StepSizeState:
    eps: float
    D: float
    gamma: float
    running_sum: float = 0.0
    t: int = 0
    variant: StepVariant = "ftl"

    @property
    def upper(self) -> float:
        """Right end of the scalar domain, ``sqrt(D^2 + eps^2 - log gamma)``."""
        if self.gamma <= 0:
            return math.inf
        return math.sqrt(self.D**2 + self.eps**2 - math.log(self.gamma))

    @property
    def lower(self) -> float:
        return self.eps

    def initial_lambda(self, m: int) -> float:
        return (self.lower + self.upper) / (2.0 * math.sqrt(m))

    def update(self, overlap: float) -> "StepSizeState":
        """Fold in one task's overlap ``<w*_t, w_t>`` (a mass in ``(0, 1]``)."""
        if not 0 < overlap <= 1 + 1e-12:
            raise ValueError(f"overlap must lie in (0, 1], got {overlap}")
        term = self.eps**2 - math.log(min(overlap, 1.0))
        return replace(self, running_sum=self.running_sum + term, t=self.t + 1)

    def next_lambda(self, m: int) -> float:
        if self.variant == "ewoo":
            return ewoo_lambda(self, m)
        return ftl_lambda(self, m)


def ftl_lambda(state: StepSizeState, m: int) -> float:
    """Follow-the-leader step size, clamped to the scalar domain over ``sqrt(m)``."""
    if state.t < 1:
        raise ValueError("no tasks observed yet; use the initial step size")
    lam = math.sqrt(state.running_sum / (state.t * m))
    return float(min(max(lam, state.lower / math.sqrt(m)), state.upper / math.sqrt(m)))


def ewoo_alpha(state: StepSizeState) -> float:
    return (2.0 / state.D) * min(state.eps**2 / state.D**2, 1.0)


def ewoo_lambda(state: StepSizeState, m: int, alpha: float | None = None,
                rtol: float = 1e-8) -> float:
    """Exponentially weighted mean of ``x`` over the scalar domain, over ``sqrt(m)``.

    The weight is ``exp(-alpha * (t x + running_sum / x))``; both integrals
    are taken by adaptive Simpson after shifting the exponent by its
    minimum on the interval.
    """
    if state.t < 1:
        raise ValueError("no tasks observed yet; use the initial step size")
    if not state.D > 0:
        raise ValueError("D must be positive")
    a, b = state.lower, state.upper
    if not math.isfinite(b):
        raise ValueError("gamma must be positive for the EWOO step size")
    if b - a <= 1e-15:
        return a / math.sqrt(m)
    alpha = ewoo_alpha(state) if alpha is None else alpha
    t, s = state.t, state.running_sum

    def h(x):
        return t * x + s / x

    x_star = min(max(math.sqrt(s / t), a), b) if s > 0 else a
    h_min = h(x_star)

    def mu(x):
        return math.exp(-alpha * (h(x) - h_min))

    num = adaptive_simpson(lambda x: x * mu(x), a, b, rtol=rtol)
    den = adaptive_simpson(mu, a, b, rtol=rtol)
    return float(num / den / math.sqrt(m))


@dataclass
class MetaConfig:
    T: int
    m: int
    beta: float = 0.5
    gamma: float = 0.01
    eta: float = 0.01
    eps: float | None = None
    D: float | None = None
    step_variant: StepVariant = "ftl"
    lam_mode: LamMode = "meta"
    seed: int = 0

    def __post_init__(self):
        if self.T < 1 or self.m < 1:
            raise ValueError("T and m must be at least 1")
        if not self.beta > 0:
            raise ValueError("beta must be positive")
        if self.step_variant not in ("ftl", "ewoo"):
            raise ValueError(f"unknown step variant {self.step_variant!r}")
        if self.lam_mode not in ("meta", "theory-fixed"):
            raise ValueError(f"unknown step-size mode {self.lam_mode!r}")

    @property
    def radius(self) -> float:
        return float(self.m ** (-self.beta))

    def resolved_eps(self) -> float:
        if self.eps is not None:
            return float(self.eps)
        power = 0.25 if self.step_variant == "ewoo" else 0.2
        return float(self.T ** (-power))

    def resolved_D(self) -> float:
        if self.D is not None:
            return float(self.D)
        return float(math.sqrt(max(self.beta * math.log(self.m), 1e-6)))

    def step_state(self) -> StepSizeState:
        return StepSizeState(self.resolved_eps(), self.resolved_D(), self.gamma,
                             variant=self.step_variant)


@dataclass
class MetaResults:
    regrets: list[float] = field(default_factory=list)
    expected_regrets: list[float] = field(default_factory=list)
    lambdas: list[float] = field(default_factory=list)
    overlaps: list[float] = field(default_factory=list)
    opt_rhos: list[float] = field(default_factory=list)
    balls: list[Interval] = field(default_factory=list)
    initializers: list[Density] = field(default_factory=list)
    final_initializer: Density | None = None
    final_distribution: CellDistribution | None = None
    next_lambda: float | None = None
    final_state: "MetaState | None" = None
    metadata: dict = field(default_factory=dict)

    @property
    def task_averaged_regret(self) -> float:
        return task_averaged_regret(self.regrets)

    @property
    def neg_log_overlaps(self) -> list[float]:
        return [-math.log(z) if z > 0 else math.inf for z in self.overlaps]


@dataclass
class MetaState:
    """Everything the loop carries from one task to the next."""

    cfg: MetaConfig
    domain: Interval
    partition: CellPartition
    history: BallHistory
    distribution: CellDistribution
    init: Density
    step: StepSizeState
    lam: float

    @classmethod
    def start(cls, cfg: MetaConfig, domain: Interval) -> "MetaState":
        if cfg.lam_mode == "meta" and cfg.gamma <= 0:
            raise ValueError("the step-size learner needs gamma > 0")
        partition = CellPartition(domain)
        history = BallHistory()
        dist = ftrl_update(history, partition, cfg.gamma, cfg.eta)
        step = cfg.step_state()
        lam = step.initial_lambda(cfg.m) if cfg.lam_mode == "meta" else math.nan
        return cls(cfg, domain, partition, history, dist, to_density(dist), step, lam)

    @property
    def n_tasks(self) -> int:
        return len(self.history)

    def lambda_for(self, m: int) -> float:
        """Learned step size rescaled to a task of ``m`` rounds."""
        if self.step.t == 0:
            return self.step.initial_lambda(m)
        return self.step.next_lambda(m)


def meta_task(state: MetaState, losses: Sequence[PiecewiseConstant],
              rng: np.random.Generator) -> tuple[MetaState, TaskTrace, float, Interval]:
    """Play one task with the current ``(w_t, lam_t)`` and fold its optimum in.

    Returns the new state, the task trace, the lam used and the clipped
    optimum ball. The overlap is measured under ``w_t`` before refining.
    """
    cfg = state.cfg
    w = state.init
    if cfg.lam_mode == "theory-fixed":
        lam_used = theory_step_size(w, losses, cfg.beta, m=cfg.m)
    else:
        lam_used = state.lam
    trace = ef_run_task(losses, w, lam_used, rng)
    ball = clip_ball(Interval.ball(trace.opt_rho, cfg.radius), state.domain)
    overlap = w.mass_in(ball) / w.mass

    history = BallHistory(state.history.balls + [ball])
    partition = refine(state.partition, ball)
    dist = ftrl_update(history, partition, cfg.gamma, cfg.eta)
    step, lam = state.step, state.lam
    if cfg.lam_mode == "meta":
        step = step.update(overlap)
        lam = step.next_lambda(cfg.m)
    new = replace(state, partition=partition, history=history, distribution=dist,
                  init=to_density(dist), step=step, lam=lam)
    return new, trace, lam_used, ball


def meta_run(tasks: Sequence[Sequence[PiecewiseConstant]], cfg: MetaConfig,
             rng: np.random.Generator, domain: Interval | None = None) -> MetaResults:
    """Meta-learn the forecaster's initialization and step size across tasks.

    For every task the forecaster runs with the current ``(w_t, lam_t)``; the
    task optimum's ball then refines the partition, the FTRL initializer is
    re-solved on the refined cells, and the step-size learner absorbs the
    overlap that ``w_t`` gave the ball.
    """
    if len(tasks) == 0:
        raise ValueError("need at least one task")
    if domain is None:
        domain = tasks[0][0].domain
    state = MetaState.start(cfg, domain)
    out = MetaResults(metadata={
        "eps": state.step.eps, "D": state.step.D, "gamma": cfg.gamma, "eta": cfg.eta,
        "radius": cfg.radius, "step_variant": cfg.step_variant, "lam_mode": cfg.lam_mode,
    })
    for losses in tasks:
        w = state.init
        state, trace, lam_used, ball = meta_task(state, losses, rng)
        out.regrets.append(trace.regret)
        out.expected_regrets.append(trace.expected_regret)
        out.lambdas.append(lam_used)
        out.overlaps.append(w.mass_in(ball) / w.mass)
        out.opt_rhos.append(trace.opt_rho)
        out.balls.append(ball)
        out.initializers.append(w)
    out.final_initializer = state.init
    out.final_distribution = state.distribution
    out.next_lambda = state.lam if cfg.lam_mode == "meta" else None
    out.final_state = state
    out.metadata["partition_cells"] = state.partition.n_cells
    return out
