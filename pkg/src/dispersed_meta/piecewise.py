"""Exact algebra for piecewise-constant functions on a closed interval.

Cells follow the closed-open convention ``[b_k, b_{k+1})`` with the last
cell closed, so the value at an interior breakpoint belongs to the cell on
its right.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

MERGE_TOL = 1e-12


class DomainMismatchError(ValueError):
    """Raised when two functions live on different domains."""


@dataclass(frozen=True)
class Interval:
    lo: float
    hi: float

    def __post_init__(self):
        if not (np.isfinite(self.lo) and np.isfinite(self.hi)):
            raise ValueError(f"interval endpoints must be finite, got [{self.lo}, {self.hi}]")
        if self.lo > self.hi:
            raise ValueError(f"interval has lo > hi: [{self.lo}, {self.hi}]")

    @property
    def width(self) -> float:
        return self.hi - self.lo

    @property
    def midpoint(self) -> float:
        return 0.5 * (self.lo + self.hi)

    def clip(self, other: "Interval") -> "Interval | None":
        """Intersection with ``other``; ``None`` when they do not overlap."""
        lo, hi = max(self.lo, other.lo), min(self.hi, other.hi)
        if lo > hi:
            return None
        return Interval(lo, hi)

    def contains(self, x: float) -> bool:
        return self.lo <= x <= self.hi

    @classmethod
    def ball(cls, center: float, radius: float) -> "Interval":
        return cls(center - radius, center + radius)

    def as_list(self) -> list[float]:
        return [float(self.lo), float(self.hi)]


def _as_readonly(a) -> np.ndarray:
    arr = np.array(a, dtype=float)
    arr.setflags(write=False)
    return arr


class PiecewiseConstant:
    """Real function on ``[breakpoints[0], breakpoints[-1]]`` constant on each cell.

    Instances are immutable; every operation returns a new object.
    """

    __slots__ = ("breakpoints", "values")

    def __init__(self, breakpoints, values):
        bp = _as_readonly(breakpoints)
        vals = _as_readonly(values)
        if bp.ndim != 1 or vals.ndim != 1:
            raise ValueError("breakpoints and values must be one-dimensional")
        if bp.size < 2:
            raise ValueError("need at least two breakpoints")
        if vals.size != bp.size - 1:
            raise ValueError(
                f"expected {bp.size - 1} values for {bp.size} breakpoints, got {vals.size}"
            )
        if not np.all(np.isfinite(bp)) or not np.all(np.isfinite(vals)):
            raise ValueError("breakpoints and values must be finite")
        if np.any(np.diff(bp) <= 0):
            raise ValueError("breakpoints must be strictly increasing")
        object.__setattr__(self, "breakpoints", bp)
        object.__setattr__(self, "values", vals)

    def __setattr__(self, name, value):
        raise AttributeError("PiecewiseConstant is immutable")

    def __reduce__(self):
        return (PiecewiseConstant, (np.asarray(self.breakpoints), np.asarray(self.values)))

    # construction helpers
    @classmethod
    def constant(cls, domain: Interval, value: float = 0.0) -> "PiecewiseConstant":
        return cls([domain.lo, domain.hi], [value])

    @classmethod
    def step(cls, domain: Interval, at: float, left: float, right: float) -> "PiecewiseConstant":
        """Two-cell function: ``left`` on ``[lo, at)``, ``right`` on ``[at, hi]``."""
        if not domain.lo < at < domain.hi:
            return cls.constant(domain, left if at >= domain.hi else right)
        return cls([domain.lo, at, domain.hi], [left, right])

    @classmethod
    def indicator(cls, domain: Interval, support: Interval, height: float = 1.0,
                  background: float = 0.0) -> "PiecewiseConstant":
        """``height`` on ``support`` (clipped to the domain), ``background`` elsewhere."""
        clipped = support.clip(domain)
        if clipped is None or clipped.width <= MERGE_TOL:
            return cls.constant(domain, background)
        bp = [domain.lo]
        vals = []
        if clipped.lo > domain.lo:
            vals.append(background)
            bp.append(clipped.lo)
        vals.append(height)
        if clipped.hi < domain.hi:
            bp.append(clipped.hi)
            vals.append(background)
        bp.append(domain.hi)
        return cls(bp, vals).normalize()

    # basic properties
    @property
    def domain(self) -> Interval:
        return Interval(float(self.breakpoints[0]), float(self.breakpoints[-1]))

    @property
    def n_cells(self) -> int:
        return self.values.size

    @property
    def widths(self) -> np.ndarray:
        return np.diff(self.breakpoints)

    @property
    def midpoints(self) -> np.ndarray:
        return 0.5 * (self.breakpoints[:-1] + self.breakpoints[1:])

    @property
    def interior_breakpoints(self) -> np.ndarray:
        return self.breakpoints[1:-1]

    def cell(self, k: int) -> Interval:
        return Interval(float(self.breakpoints[k]), float(self.breakpoints[k + 1]))

    def cell_index(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        lo, hi = self.breakpoints[0], self.breakpoints[-1]
        if x.size and (x.min() < lo or x.max() > hi):
            raise ValueError(f"evaluation point outside domain [{lo}, {hi}]")
        idx = np.searchsorted(self.breakpoints, x, side="right") - 1
        return np.minimum(np.maximum(idx, 0), self.breakpoints.size - 2)

    def __call__(self, x):
        out = self.values[self.cell_index(x)]
        return float(out) if np.ndim(out) == 0 else out

    def integral(self) -> float:
        return float(np.dot(self.values, self.widths))

    def min(self) -> float:
        return float(self.values.min())

    def max(self) -> float:
        return float(self.values.max())

    # algebra
    def normalize(self) -> "PiecewiseConstant":
        """Drop sub-tolerance cells and merge equal-valued neighbours. Idempotent."""
        bp, vals = self.breakpoints, self.values
        if np.any(np.diff(bp) <= MERGE_TOL):
            keep = [0]
            for k in range(1, bp.size - 1):
                if bp[k] - bp[keep[-1]] > MERGE_TOL:
                    keep.append(k)
            if bp[-1] - bp[keep[-1]] <= MERGE_TOL and len(keep) > 1:
                keep.pop()
            # each merged cell takes the value of its widest constituent
            bounds = keep + [bp.size - 1]
            widths = np.diff(bp)
            new_vals = np.array([
                vals[a + int(np.argmax(widths[a:b]))] for a, b in zip(bounds[:-1], bounds[1:])
            ])
            bp = np.append(bp[keep], bp[-1])
            vals = new_vals
        if vals.size > 1:
            change = np.flatnonzero(vals[1:] != vals[:-1]) + 1
            starts = np.concatenate(([0], change))
            bp = np.concatenate((bp[starts], bp[-1:]))
            vals = vals[starts]
        if bp is self.breakpoints and vals is self.values:
            return self
        return PiecewiseConstant(bp, vals)

    def _check_domain(self, other: "PiecewiseConstant") -> None:
        if (self.breakpoints[0] != other.breakpoints[0]
                or self.breakpoints[-1] != other.breakpoints[-1]):
            raise DomainMismatchError(
                f"domain mismatch: {self.domain.as_list()} vs {other.domain.as_list()}"
            )

    def __add__(self, other):
        if isinstance(other, PiecewiseConstant):
            return pc_add(self, other)
        return PiecewiseConstant(self.breakpoints, self.values + float(other)).normalize()

    __radd__ = __add__

    def __mul__(self, other):
        if isinstance(other, PiecewiseConstant):
            return pc_mul(self, other)
        return self.scale(other)

    __rmul__ = __mul__

    def __neg__(self) -> "PiecewiseConstant":
        return PiecewiseConstant(self.breakpoints, -self.values)

    def __sub__(self, other):
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def scale(self, c: float) -> "PiecewiseConstant":
        return PiecewiseConstant(self.breakpoints, self.values * float(c)).normalize()

    def clip(self, lo: float = 0.0, hi: float = 1.0) -> "PiecewiseConstant":
        return PiecewiseConstant(self.breakpoints, np.clip(self.values, lo, hi)).normalize()

    def equals(self, other: "PiecewiseConstant", atol: float = 0.0) -> bool:
        a, b = self.normalize(), other.normalize()
        return (a.breakpoints.shape == b.breakpoints.shape
                and np.allclose(a.breakpoints, b.breakpoints, rtol=0, atol=atol)
                and np.allclose(a.values, b.values, rtol=0, atol=atol))

    def __repr__(self):
        return (f"PiecewiseConstant(n_cells={self.n_cells}, "
                f"domain={self.domain.as_list()})")

    # serialization
    def to_dict(self) -> dict:
        return {
            "domain": self.domain.as_list(),
            "breakpoints": self.breakpoints.tolist(),
            "values": self.values.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "PiecewiseConstant":
        pc = cls(d["breakpoints"], d["values"])
        lo, hi = d.get("domain", pc.domain.as_list())
        if pc.breakpoints[0] != lo or pc.breakpoints[-1] != hi:
            raise ValueError("serialized domain does not match breakpoints")
        return pc


def pc_add(f: PiecewiseConstant, g: PiecewiseConstant) -> PiecewiseConstant:
    """Pointwise sum on the merged partition, normalized."""
    f._check_domain(g)
    if g.values.size == 1:
        return f if g.values[0] == 0 else f + float(g.values[0])
    if f.values.size == 1:
        return g if f.values[0] == 0 else g + float(f.values[0])
    bp = np.union1d(f.breakpoints, g.breakpoints)
    left = bp[:-1]
    vals = f.values[f.cell_index(left)] + g.values[g.cell_index(left)]
    return PiecewiseConstant(bp, vals).normalize()


def pc_mul(f: PiecewiseConstant, g: PiecewiseConstant) -> PiecewiseConstant:
    """Pointwise product on the merged partition, normalized."""
    f._check_domain(g)
    bp = np.union1d(f.breakpoints, g.breakpoints)
    left = bp[:-1]
    vals = f.values[f.cell_index(left)] * g.values[g.cell_index(left)]
    return PiecewiseConstant(bp, vals).normalize()


def pc_sum(fs) -> PiecewiseConstant:
    """Sum of a nonempty sequence, computed on the union of all breakpoints at once."""
    fs = list(fs)
    if not fs:
        raise ValueError("cannot sum an empty sequence")
    for g in fs[1:]:
        fs[0]._check_domain(g)
    bp = np.unique(np.concatenate([f.breakpoints for f in fs]))
    left = bp[:-1]
    vals = np.zeros(left.size)
    for f in fs:
        vals += f.values[f.cell_index(left)]
    return PiecewiseConstant(bp, vals).normalize()


def pc_argmin(f: PiecewiseConstant) -> tuple[Interval, float, float]:
    """Leftmost cell attaining the minimum, its value, and the cell midpoint."""
    k = int(np.argmin(f.values))
    cell = f.cell(k)
    return cell, float(f.values[k]), cell.midpoint


class Density:
    """Nonnegative piecewise-constant weight function with its total mass."""

    __slots__ = ("pc", "mass")

    def __init__(self, pc: PiecewiseConstant):
        if np.any(pc.values < 0):
            raise ValueError("density values must be nonnegative")
        object.__setattr__(self, "pc", pc)
        object.__setattr__(self, "mass", pc.integral())

    def __setattr__(self, name, value):
        raise AttributeError("Density is immutable")

    def __reduce__(self):
        return (Density, (self.pc,))

    @classmethod
    def uniform(cls, domain: Interval) -> "Density":
        return cls(PiecewiseConstant.constant(domain, 1.0 / domain.width))

    @classmethod
    def from_cells(cls, breakpoints, cell_masses) -> "Density":
        bp = np.asarray(breakpoints, dtype=float)
        return cls(PiecewiseConstant(bp, np.asarray(cell_masses, dtype=float) / np.diff(bp)))

    @property
    def domain(self) -> Interval:
        return self.pc.domain

    def normalized(self) -> "Density":
        if self.mass <= 0:
            raise ValueError("cannot normalize a zero-mass density")
        return Density(PiecewiseConstant(self.pc.breakpoints, self.pc.values / self.mass))

    def scale(self, c: float) -> "Density":
        return Density(PiecewiseConstant(self.pc.breakpoints, self.pc.values * c))

    def mass_in(self, interval: Interval) -> float:
        """Exact integral of the density over ``interval`` (clipped to the domain)."""
        clipped = interval.clip(self.domain)
        if clipped is None:
            return 0.0
        bp = self.pc.breakpoints
        lo = np.maximum(bp[:-1], clipped.lo)
        hi = np.minimum(bp[1:], clipped.hi)
        overlap = np.clip(hi - lo, 0.0, None)
        return float(np.dot(self.pc.values, overlap))

    def cell_masses(self) -> np.ndarray:
        return self.pc.values * self.pc.widths

    def __call__(self, x):
        return self.pc(x)

    def __repr__(self):
        return f"Density(n_cells={self.pc.n_cells}, mass={self.mass:.6g})"


class CellMasses(NamedTuple):
    """Per-cell masses on a partition; true masses are ``masses * exp(log_scale)``."""

    breakpoints: np.ndarray
    masses: np.ndarray
    log_scale: float

    @property
    def cells(self) -> list[Interval]:
        bp = self.breakpoints
        return [Interval(float(bp[k]), float(bp[k + 1])) for k in range(bp.size - 1)]

    def total(self) -> float:
        return float(self.masses.sum() * np.exp(self.log_scale))

    def probabilities(self) -> np.ndarray:
        return self.masses / self.masses.sum()


def exp_neg_masses(F: PiecewiseConstant, lam: float, base: Density,
                   shift: bool = False) -> CellMasses:
    """Masses of ``base * exp(-lam * F)`` on the merged partition, in closed form.

    With ``shift=True`` the exponent is offset by ``min F`` so that the
    largest factor is exactly one; the offset is returned as ``log_scale``.
    """
    if lam < 0:
        raise ValueError("lam must be nonnegative")
    F._check_domain(base.pc)
    bp = np.union1d(F.breakpoints, base.pc.breakpoints)
    left = bp[:-1]
    fv = F.values[F.cell_index(left)]
    bv = base.pc.values[base.pc.cell_index(left)]
    offset = float(fv.min()) if shift else 0.0
    masses = bv * np.diff(bp) * np.exp(-lam * (fv - offset))
    return CellMasses(bp, masses, -lam * offset)
