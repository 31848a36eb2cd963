"""Estimator-style wrappers over the functional forecaster and meta-learner.

The objects follow the scikit-learn conventions: hyperparameters are set in
``__init__`` and exposed through ``get_params``; learned state lives in
trailing-underscore attributes created by ``fit`` or ``partial_fit``.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.exceptions import NotFittedError

from .forecaster import ef_init, ef_run_task, ef_sample, ef_update, theory_step_size
from .meta_init import BallHistory, CellPartition, clip_ball, ftrl_update, refine, to_density
from .meta_step import MetaConfig, MetaState, meta_run, meta_task
from .piecewise import Density, Interval
from .validation import (
    check_generator,
    check_interval,
    check_loss,
    check_losses,
    check_positive,
    check_tasks,
)


def _check_fitted(est, attr: str):
    if not hasattr(est, attr):
        raise NotFittedError(f"{type(est).__name__} is not fitted yet; call fit or partial_fit")


class ExponentialForecaster(BaseEstimator):
    """Continuous Hedge over a one-dimensional parameter domain.

    ``lam="theory"`` picks the oracle step size for the task passed to
    ``fit``; ``partial_fit`` needs a numeric ``lam``.
    """

    def __init__(self, domain=(0.0, 1.0), lam="theory", beta=0.5, init=None, random_state=None):
        self.domain = domain
        self.lam = lam
        self.beta = beta
        self.init = init
        self.random_state = random_state

    def _init_density(self, domain: Interval) -> Density:
        if self.init is None:
            return Density.uniform(domain)
        if not isinstance(self.init, Density):
            raise TypeError("init must be a Density or None")
        return self.init

    def fit(self, losses, y=None):
        domain = check_interval(self.domain)
        losses = check_losses(losses, domain)
        init = self._init_density(domain)
        lam = self._resolve_lam(init, losses)
        self.rng_ = check_generator(self.random_state)
        trace = ef_run_task(losses, init, lam, self.rng_, keep_state=True)
        self.trace_ = trace
        self.state_ = trace.final_state
        self.plays_ = trace.plays
        self.regret_ = trace.regret
        self.lam_ = lam
        return self

    def partial_fit(self, loss, y=None):
        """Draw a play for the coming round, then absorb ``loss``."""
        domain = check_interval(self.domain)
        loss = check_loss(loss, domain)
        if not hasattr(self, "state_"):
            if isinstance(self.lam, str):
                raise ValueError("partial_fit needs a numeric lam")
            check_positive(self.lam, "lam")
            self.lam_ = float(self.lam)
            self.rng_ = check_generator(self.random_state)
            self.state_ = ef_init(domain, self._init_density(domain), self.lam_)
            self.plays_ = np.zeros(0)
        play = ef_sample(self.state_, self.rng_)
        self.plays_ = np.append(self.plays_, play)
        self.state_ = ef_update(self.state_, loss)
        return self

    def _resolve_lam(self, init, losses) -> float:
        if isinstance(self.lam, str):
            if self.lam != "theory":
                raise ValueError(f"unknown lam {self.lam!r}; use 'theory' or a number")
            return theory_step_size(init, losses, self.beta)
        return float(check_positive(self.lam, "lam"))

    def sample(self, n: int = 1, random_state=None) -> np.ndarray:
        _check_fitted(self, "state_")
        rng = self.rng_ if random_state is None else check_generator(random_state)
        return np.array([ef_sample(self.state_, rng) for _ in range(n)])

    def distribution(self) -> Density:
        _check_fitted(self, "state_")
        return self.state_.distribution()


class MetaInitializer(BaseEstimator):
    """FTRL initializer over the adaptive partition, fed one optimum at a time."""

    def __init__(self, domain=(0.0, 1.0), gamma=0.01, eta=0.01, radius=0.1):
        self.domain = domain
        self.gamma = gamma
        self.eta = eta
        self.radius = radius

    def fit(self, opt_rhos, y=None):
        for attr in ("history_", "partition_", "distribution_", "density_"):
            self.__dict__.pop(attr, None)
        for rho in np.atleast_1d(opt_rhos):
            self.partial_fit(float(rho))
        return self

    def partial_fit(self, opt_rho, y=None):
        domain = check_interval(self.domain)
        check_positive(self.radius, "radius")
        if not hasattr(self, "history_"):
            self.history_ = BallHistory()
            self.partition_ = CellPartition(domain)
        ball = clip_ball(Interval.ball(float(opt_rho), self.radius), domain)
        self.history_.append(ball)
        self.partition_ = refine(self.partition_, ball)
        self.distribution_ = ftrl_update(self.history_, self.partition_, self.gamma, self.eta)
        self.density_ = to_density(self.distribution_)
        return self

    def density(self) -> Density:
        if not hasattr(self, "density_"):
            return Density.uniform(check_interval(self.domain))
        return self.density_


class MetaForecaster(BaseEstimator):
    """Meta-learns the forecaster's initialization and step size over tasks."""

    def __init__(self, domain=(0.0, 1.0), m=30, beta=0.5, gamma=0.01, eta=0.01, eps=None,
                 D=None, step_variant="ftl", lam_mode="meta", n_tasks_hint=10,
                 random_state=None):
        self.domain = domain
        self.m = m
        self.beta = beta
        self.gamma = gamma
        self.eta = eta
        self.eps = eps
        self.D = D
        self.step_variant = step_variant
        self.lam_mode = lam_mode
        self.n_tasks_hint = n_tasks_hint
        self.random_state = random_state

    def _config(self, T: int) -> MetaConfig:
        return MetaConfig(T=T, m=self.m, beta=self.beta, gamma=self.gamma, eta=self.eta,
                          eps=self.eps, D=self.D, step_variant=self.step_variant,
                          lam_mode=self.lam_mode)

    def fit(self, tasks, y=None):
        domain = check_interval(self.domain)
        tasks = check_tasks(tasks, domain)
        self.rng_ = check_generator(self.random_state)
        self.results_ = meta_run(tasks, self._config(len(tasks)), self.rng_, domain)
        self.state_ = self.results_.final_state
        return self

    def partial_fit(self, losses, y=None):
        """Run one more task; ``eps`` defaults use ``n_tasks_hint`` as the horizon."""
        domain = check_interval(self.domain)
        losses = check_losses(losses, domain)
        if not hasattr(self, "state_"):
            self.rng_ = check_generator(self.random_state)
            self.state_ = MetaState.start(self._config(self.n_tasks_hint), domain)
        self.state_, trace, _, _ = meta_task(self.state_, losses, self.rng_)
        self.last_trace_ = trace
        return self

    @property
    def init_(self) -> Density:
        _check_fitted(self, "state_")
        return self.state_.init

    def lambda_for(self, m: int) -> float:
        _check_fitted(self, "state_")
        return self.state_.lambda_for(m)

    def make_forecaster(self, m: int | None = None, random_state=None) -> ExponentialForecaster:
        """A single-task forecaster seeded with the learned initialization and step size."""
        m = self.m if m is None else m
        return ExponentialForecaster(self.domain, lam=self.lambda_for(m), beta=self.beta,
                                     init=self.init_, random_state=random_state)
