"""Mean and standard-error tables and a dependency-free SVG regret plot."""

from __future__ import annotations

import math
from collections import defaultdict
from xml.sax.saxutils import escape

import numpy as np

from .io import DataError

WIDTH, HEIGHT = 800, 500
MARGIN = 60
COLORS = {"single_task": "#1f77b4", "meta_initialized": "#d62728"}


def summarize(rows: list[dict]) -> list[dict]:
    """Mean and standard error of accuracy and regret per (dataset, variant, shots)."""
    if not rows:
        raise DataError("results file has no rows")
    ids = {r["experiment_id"] for r in rows}
    if len(ids) > 1:
        raise DataError(f"results mix experiments {sorted(ids)}; report them separately")
    groups = defaultdict(lambda: {"accuracy": [], "regret": []})
    for r in rows:
        try:
            key = (r["dataset"], r["variant"], int(r["shots"]))
            groups[key]["accuracy"].append(float(r["accuracy"]))
            groups[key]["regret"].append(float(r["regret"]))
        except (KeyError, ValueError) as exc:
            raise DataError(f"malformed results row {r}: {exc}") from exc
    out = []
    for (dataset, variant, shots), vals in sorted(groups.items()):
        entry = {"dataset": dataset, "variant": variant, "shots": shots,
                 "n": len(vals["regret"])}
        for name, xs in vals.items():
            xs = np.asarray(xs)
            entry[name] = float(xs.mean())
            entry[f"{name}_se"] = float(xs.std(ddof=1) / math.sqrt(xs.size)) if xs.size > 1 else 0.0
        out.append(entry)
    return out


def format_table(summary: list[dict]) -> str:
    head = f"{'dataset':<18}{'variant':<18}{'shots':>6}{'n':>7}  {'accuracy (%)':>20}  {'regret':>20}"
    lines = [head, "-" * len(head)]
    for s in summary:
        acc = "n/a" if math.isnan(s["accuracy"]) else \
            f"{100 * s['accuracy']:.2f} ± {100 * s['accuracy_se']:.2f}"
        reg = f"{s['regret']:.4f} ± {s['regret_se']:.4f}"
        lines.append(f"{s['dataset']:<18}{s['variant']:<18}{s['shots']:>6}{s['n']:>7}  "
                     f"{acc:>20}  {reg:>20}")
    return "\n".join(lines) + "\n"


def _ticks(lo: float, hi: float, n: int = 5) -> list[float]:
    if hi <= lo:
        return [lo]
    return list(np.linspace(lo, hi, n))


def regret_svg(curve: list[dict], title: str = "Mean test-task regret") -> str:
    """Line plot of mean regret against the number of training tasks, one line per series."""
    series = defaultdict(list)
    for r in curve:
        series[(r["variant"], int(r["shots"]))].append((int(r["n_train_tasks"]),
                                                      float(r["mean_regret"])))
    xs = [x for pts in series.values() for x, _ in pts] or [0]
    ys = [y for pts in series.values() for _, y in pts] or [0.0]
    x0, x1 = min(xs), max(max(xs), min(xs) + 1)
    y0, y1 = min(0.0, min(ys)), max(ys) if max(ys) > min(0.0, min(ys)) else 1.0
    pw, ph = WIDTH - 2 * MARGIN, HEIGHT - 2 * MARGIN

    def px(x):
        return MARGIN + (x - x0) / (x1 - x0) * pw

    def py(y):
        return HEIGHT - MARGIN - (y - y0) / (y1 - y0) * ph

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
        f'viewBox="0 0 {WIDTH} {HEIGHT}">',
        f'<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>',
        f'<text x="{WIDTH / 2}" y="{MARGIN / 2}" text-anchor="middle" '
        f'font-family="sans-serif" font-size="16">{escape(title)}</text>',
        f'<polyline points="{MARGIN},{MARGIN} {MARGIN},{HEIGHT - MARGIN} '
        f'{WIDTH - MARGIN},{HEIGHT - MARGIN}" fill="none" stroke="black"/>',
    ]
    for t in _ticks(x0, x1, min(x1 - x0 + 1, 11)):
        parts.append(f'<text x="{px(t):.1f}" y="{HEIGHT - MARGIN + 18}" text-anchor="middle" '
                     f'font-family="sans-serif" font-size="11">{t:.0f}</text>')
    for t in _ticks(y0, y1):
        parts.append(f'<text x="{MARGIN - 6}" y="{py(t) + 4:.1f}" text-anchor="end" '
                     f'font-family="sans-serif" font-size="11">{t:.3g}</text>')
    parts.append(f'<text x="{WIDTH / 2}" y="{HEIGHT - 15}" text-anchor="middle" '
                 f'font-family="sans-serif" font-size="12">number of training tasks</text>')
    for n, ((variant, shots), pts) in enumerate(sorted(series.items())):
        pts.sort()
        color = COLORS.get(variant, "#555555")
        dash = "" if shots == 1 else ' stroke-dasharray="6,3"'
        coords = " ".join(f"{px(x):.1f},{py(y):.1f}" for x, y in pts)
        parts.append(f'<polyline points="{coords}" fill="none" stroke="{color}" '
                     f'stroke-width="2"{dash}/>')
        ly = MARGIN + 16 * n
        parts.append(f'<text x="{WIDTH - MARGIN - 4}" y="{ly}" text-anchor="end" fill="{color}" '
                     f'font-family="sans-serif" font-size="11">'
                     f'{escape(variant)}, {shots}-shot</text>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"
