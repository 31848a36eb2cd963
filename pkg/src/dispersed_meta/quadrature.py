"""Adaptive Simpson quadrature with a panel budget."""

from __future__ import annotations

from collections.abc import Callable, Sequence


class QuadratureError(RuntimeError):
    """Raised when the panel budget is exhausted before reaching tolerance."""


def _simpson(fa, fm, fb, h):
    return h / 6.0 * (fa + 4.0 * fm + fb)


def adaptive_simpson(
    f: Callable[[float], float],
    a: float,
    b: float,
    rtol: float = 1e-8,
    atol: float = 0.0,
    max_panels: int = 2**20,
    points: Sequence[float] | None = None,
) -> float:
    """Integrate ``f`` over ``[a, b]`` by adaptive Simpson's rule.

    The interval is first split at ``points`` (known discontinuities of
    ``f``), and each piece is refined until the Richardson error estimate on
    every panel is below its share of ``max(atol, rtol * |I|)``, where ``I`` is
    a running estimate of the integral.

    Raises:
        QuadratureError: if more than ``max_panels`` panels would be needed.
    """
    if a == b:
        return 0.0
    if a > b:
        return -adaptive_simpson(f, b, a, rtol, atol, max_panels, points)
    edges = [a]
    if points is not None:
        edges.extend(sorted(p for p in points if a < p < b))
    edges.append(b)

    # coarse pass sets the absolute scale for the relative tolerance
    pieces = []
    coarse = 0.0
    for lo, hi in zip(edges[:-1], edges[1:]):
        m = 0.5 * (lo + hi)
        fa, fm, fb = f(lo), f(m), f(hi)
        whole = _simpson(fa, fm, fb, hi - lo)
        pieces.append((lo, hi, fa, fm, fb, whole))
        coarse += whole
    total_width = b - a

    panels = len(pieces)
    result = 0.0
    stack = [(lo, hi, fa, fm, fb, whole, 0) for lo, hi, fa, fm, fb, whole in pieces]
    scale = abs(coarse)
    while stack:
        lo, hi, fa, fm, fb, whole, depth = stack.pop()
        m = 0.5 * (lo + hi)
        lm, rm = 0.5 * (lo + m), 0.5 * (m + hi)
        flm, frm = f(lm), f(rm)
        left = _simpson(fa, flm, fm, m - lo)
        right = _simpson(fm, frm, fb, hi - m)
        err = (left + right - whole) / 15.0
        tol = max(atol, rtol * scale) * (hi - lo) / total_width
        if abs(err) <= tol or depth >= 60:
            result += left + right + err
            continue
        panels += 1
        if panels > max_panels:
            raise QuadratureError(
                f"adaptive Simpson did not converge within {max_panels} panels"
            )
        stack.append((m, hi, fm, frm, fb, right, depth + 1))
        stack.append((lo, m, fa, flm, fm, left, depth + 1))
    return float(result)

