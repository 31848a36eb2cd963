"""Input checks shared by the estimators and the harness."""

from __future__ import annotations

import numbers
from typing import Sequence

import numpy as np

from .piecewise import Interval, PiecewiseConstant

LOSS_TOL = 1e-12


def check_generator(seed) -> np.random.Generator:
    """Turn ``None``, an int, a SeedSequence or a Generator into a Generator."""
    if isinstance(seed, np.random.Generator):
        return seed
    if seed is None or isinstance(seed, (numbers.Integral, np.random.SeedSequence)):
        return np.random.default_rng(seed)
    raise TypeError(f"cannot build a random generator from {seed!r}")


def check_interval(domain) -> Interval:
    if isinstance(domain, Interval):
        return domain
    try:
        lo, hi = domain
    except (TypeError, ValueError):
        raise TypeError(f"domain must be an Interval or a (lo, hi) pair, got {domain!r}")
    return Interval(float(lo), float(hi))


def check_positive(value, name: str, integer: bool = False, allow_zero: bool = False):
    kind = numbers.Integral if integer else numbers.Real
    if isinstance(value, bool) or not isinstance(value, kind):
        raise TypeError(f"{name} must be {'an integer' if integer else 'a real number'}")
    if value < 0 or (value == 0 and not allow_zero) or not np.isfinite(value):
        raise ValueError(f"{name} must be {'nonnegative' if allow_zero else 'positive'}, got {value}")
    return value


def check_loss(loss, domain: Interval | None = None) -> PiecewiseConstant:
    if not isinstance(loss, PiecewiseConstant):
        raise TypeError(f"expected a PiecewiseConstant loss, got {type(loss).__name__}")
    if domain is not None and loss.domain != domain:
        raise ValueError(f"loss domain {loss.domain.as_list()} differs from {domain.as_list()}")
    if loss.min() < -LOSS_TOL or loss.max() > 1 + LOSS_TOL:
        raise ValueError("losses must take values in [0, 1]")
    return loss


def check_losses(losses: Sequence, domain: Interval | None = None) -> list[PiecewiseConstant]:
    """Nonempty list of [0, 1]-valued losses sharing one domain."""
    if isinstance(losses, PiecewiseConstant):
        losses = [losses]
    losses = list(losses)
    if not losses:
        raise ValueError("need at least one loss")
    domain = losses[0].domain if domain is None else domain
    return [check_loss(f, domain) for f in losses]


def check_tasks(tasks: Sequence, domain: Interval | None = None) -> list[list[PiecewiseConstant]]:
    tasks = list(tasks)
    if not tasks:
        raise ValueError("need at least one task")
    domain = check_losses(tasks[0])[0].domain if domain is None else domain
    return [check_losses(t, domain) for t in tasks]
