import numpy as np
import pytest
from hypothesis import settings, strategies as st

from dispersed_meta.piecewise import Interval, PiecewiseConstant

settings.register_profile("default", max_examples=60, deadline=None)
settings.load_profile("default")

UNIT = Interval(0.0, 1.0)


@st.composite
def piecewise(draw, domain=UNIT, max_cells=8, lo=-1.0, hi=1.0):
    """Random piecewise-constant function on ``domain``."""
    n = draw(st.integers(1, max_cells))
    inner = draw(st.lists(st.floats(domain.lo, domain.hi, allow_nan=False),
                          min_size=n - 1, max_size=n - 1, unique=True))
    inner = sorted(x for x in inner if domain.lo + 1e-6 < x < domain.hi - 1e-6)
    bp = [domain.lo, *inner, domain.hi]
    bp = [x for i, x in enumerate(bp) if i == 0 or x - bp[i - 1] > 1e-6 or i == len(bp) - 1]
    if bp[-1] - bp[-2] <= 1e-6 and len(bp) > 2:
        bp.pop(-2)
    vals = draw(st.lists(st.floats(lo, hi, allow_nan=False), min_size=len(bp) - 1,
                         max_size=len(bp) - 1))
    return PiecewiseConstant(bp, vals)


def losses(domain=UNIT, max_cells=8):
    return piecewise(domain=domain, max_cells=max_cells, lo=0.0, hi=1.0)


def random_loss(rng, domain=UNIT, n_cells=5):
    inner = np.sort(rng.uniform(domain.lo, domain.hi, n_cells - 1))
    return PiecewiseConstant([domain.lo, *inner, domain.hi], rng.random(n_cells))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
