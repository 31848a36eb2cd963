import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from conftest import UNIT
from dispersed_meta.meta_init import ball_matrix, clip_ball, refine, CellPartition
from dispersed_meta.metrics import (
    discontinuities,
    dispersion_count,
    neg_log_overlap,
    task_averaged_regret,
    task_similarity,
)
from dispersed_meta.piecewise import Density, Interval, PiecewiseConstant
from dispersed_meta.robust import halving_losses


def binary_entropy(p):
    return -p * math.log(p) - (1 - p) * math.log(1 - p)


def disjoint_balls(T, width=0.05):
    return [Interval(k / T, k / T + width) for k in range(T)]


def test_neg_log_overlap_examples():
    u = Density.uniform(UNIT)
    assert neg_log_overlap(u, Interval(0.3, 0.4)) == pytest.approx(math.log(10))
    inside = Density(PiecewiseConstant.indicator(UNIT, Interval(0.2, 0.3), 10.0))
    assert neg_log_overlap(inside, Interval(0.1, 0.4)) == 0.0
    assert neg_log_overlap(inside, Interval(0.5, 0.6)) == math.inf
    assert neg_log_overlap(inside.scale(7.0), Interval(0.25, 0.4)) == pytest.approx(
        neg_log_overlap(inside, Interval(0.25, 0.4)), abs=1e-12)


def test_similarity_identical_balls():
    ts = task_similarity([Interval(0.3, 0.5)] * 4, UNIT)
    assert ts.v_squared == pytest.approx(0.0, abs=1e-9)
    assert ts.density.mass_in(Interval(0.3, 0.5)) == pytest.approx(1.0, abs=1e-9)


def similarity_log_T_error(T):
    ts = task_similarity(disjoint_balls(T), UNIT)
    masses = [ts.density.mass_in(b) for b in disjoint_balls(T)]
    return abs(ts.v_squared - math.log(T)), max(abs(m - 1 / T) for m in masses)


def similarity_entropy_error(p, T=10):
    n = int(round(p * T))
    balls = [Interval(0.1, 0.2)] * n + [Interval(0.6, 0.7)] * (T - n)
    return abs(task_similarity(balls, UNIT).v_squared - binary_entropy(p))


@pytest.mark.parametrize("T", [2, 3, 5, 8])
def test_similarity_disjoint_is_log_T(T):
    err, mass_err = similarity_log_T_error(T)
    assert err <= 1e-6
    assert mass_err <= 1e-6


@pytest.mark.parametrize("p", [0.1, 0.3, 0.5])
def test_similarity_two_balls_is_binary_entropy(p):
    assert similarity_entropy_error(p) <= 1e-6


def test_similarity_v_is_root():
    ts = task_similarity(disjoint_balls(4), UNIT)
    assert ts.v == pytest.approx(math.sqrt(math.log(4)), rel=1e-6)


@given(st.lists(st.tuples(st.floats(0, 1), st.floats(0.01, 0.3)), min_size=1, max_size=6))
def test_similarity_bounds_and_kkt(specs):
    balls = [clip_ball(Interval.ball(c, r), UNIT) for c, r in specs]
    ts = task_similarity(balls, UNIT)
    u = Density.uniform(UNIT)
    assert ts.v_squared <= max(neg_log_overlap(u, b) for b in balls) + 1e-9
    assert ts.v_squared >= -1e-12
    # KKT: equal gradient over cells carrying mass
    p = CellPartition(UNIT)
    for b in balls:
        p = refine(p, b)
    A = ball_matrix(p, balls)
    w = np.array([ts.density.mass_in(c) for c in p.cells])
    g = -(A.T @ (1.0 / (A @ w))) / len(balls)
    pos = w > 1e-4
    assert np.ptp(g[pos]) <= 1e-6 * max(1.0, np.abs(g[pos]).max()) + 1e-6


def test_dispersion_examples():
    zero = PiecewiseConstant.constant(UNIT, 0.0)
    assert dispersion_count([zero, zero], 0.1).max_window_count == 0
    fs = [PiecewiseConstant.step(UNIT, x, 0.0, 1.0) for x in (0.1, 0.15, 0.9)]
    rep = dispersion_count(fs, 0.1)
    assert rep.max_window_count == 2
    assert rep.total_discontinuities == 3
    with pytest.raises(ValueError):
        dispersion_count(fs, 0.0)


def test_dispersion_counts_functions_not_jumps():
    f = PiecewiseConstant([0, 0.1, 0.12, 1], [0, 1, 0])
    assert dispersion_count([f], 0.1).max_window_count == 1
    np.testing.assert_allclose(discontinuities(f), [0.1, 0.12])


@given(st.lists(st.floats(0.001, 0.999), min_size=1, max_size=40), st.floats(0.001, 0.5))
def test_dispersion_matches_brute_force(xs, eps):
    fs = [PiecewiseConstant.step(UNIT, x, 0.0, 1.0) for x in xs]
    rep = dispersion_count(fs, eps)
    xs = np.asarray(xs)
    brute = max(int(np.sum((xs >= x) & (xs <= x + eps))) for x in xs)
    assert rep.max_window_count == brute
    assert rep.max_window_count <= rep.total_discontinuities


def test_halving_dispersion_growth():
    counts = []
    ms = [256, 1024, 4096]
    for m in ms:
        tr = halving_losses(m, 0.5, 0.5, 0.25, UNIT, np.random.default_rng(m))
        counts.append(dispersion_count(tr.losses, m ** -0.5).max_window_count)
    for m, c in zip(ms, counts):
        assert c <= 3 * math.sqrt(m) * math.log(m)


def test_task_averaged_regret():
    assert task_averaged_regret([4.2]) == 4.2
    assert task_averaged_regret([0, 0]) == 0
    assert task_averaged_regret([1, 2, 3]) == 2
    with pytest.raises(ValueError):
        task_averaged_regret([])
