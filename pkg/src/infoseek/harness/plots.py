"""Static SVG plots of aggregate sweep CSVs.

The SVG is written by hand so the package needs no plotting library. Each
plot kind names the CSV columns it reads; points are medians over seeds,
grouped by the ``label`` column. Runs that never reached the threshold are
plotted at the number of episodes they ran (a lower bound).
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from statistics import median
from xml.sax.saxutils import escape

from ..core import ContractViolation


class PlotError(ContractViolation):
    pass


@dataclass(frozen=True)
class PlotKind:
    x: str
    y: str
    xlabel: str
    ylabel: str
    group: str = "label"
    logx: bool = False
    logy: bool = False
    reference: str | None = None  # pow2, log, identity, inverse


PLOT_KINDS = {
    "deepsea": PlotKind("env.size", "learning_time", "DeepSea size N", "episodes to learn",
                        logy=True, reference="pow2"),
    "sparse_scaling": PlotKind("env.size", "learning_time", "number of arms N", "episodes to learn",
                               logx=True, reference="log"),
    "informative": PlotKind("env.size", "learning_time", "number of arms N", "episodes to learn",
                            reference="identity"),
    "informative_chain": PlotKind("env.tau", "learning_time", "chain length", "episodes to learn",
                                  reference="identity"),
    "pessimism": PlotKind("agent.eps_pess", "learning_time", "pessimism offset", "episodes to learn",
                          logx=True),
    "satisficing": PlotKind("agent.satisficing_epsilon", "cumulative_regret", "satisficing tolerance",
                            "cumulative regret"),
    "logistic": PlotKind("agent.k", "learning_time", "observation components used", "episodes to learn",
                         reference="inverse"),
}

PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#17becf")
W, H = 640, 420
LEFT, RIGHT, TOP, BOTTOM = 70, 150, 30, 55


def _read_rows(path) -> tuple[list[str], list[dict]]:
    text = Path(path).read_text()
    if not text.strip():
        return [], []
    reader = csv.DictReader(text.splitlines())
    return list(reader.fieldnames or []), list(reader)


def _num(text):
    try:
        v = float(text)
    except (TypeError, ValueError):
        return None
    return v if math.isfinite(v) else None


def collect_series(kind: PlotKind, columns, rows) -> dict[str, list[tuple[float, float]]]:
    """Median y per (group, x), sorted by x."""
    if rows or columns:
        for col in (kind.x, kind.y, kind.group):
            if col not in columns:
                raise PlotError(f"column {col!r} missing for this plot kind")
    cells: dict[str, dict[float, list[float]]] = {}
    for row in rows:
        if row.get("status", "ok") != "ok":
            continue
        x = _num(row[kind.x])
        y = _num(row[kind.y])
        if y is None and kind.y == "learning_time":
            y = _num(row.get("episodes"))
        if x is None or y is None:
            continue
        cells.setdefault(row[kind.group], {}).setdefault(x, []).append(y)
    return {g: sorted((x, median(ys)) for x, ys in pts.items()) for g, pts in sorted(cells.items())}


class _Axis:
    def __init__(self, values, log, lo_px, hi_px):
        vals = [v for v in values if (v > 0 if log else True)]
        self.log = log
        if not vals:
            lo, hi = (1.0, 10.0) if log else (0.0, 1.0)
        else:
            lo, hi = min(vals), max(vals)
            if not log:
                lo = min(lo, 0.0)
        if log:
            lo, hi = 10 ** math.floor(math.log10(lo)), 10 ** math.ceil(math.log10(hi))
            if lo == hi:
                hi = lo * 10
        elif hi - lo < 1e-12:
            hi = lo + 1.0
        self.lo, self.hi = lo, hi
        self.lo_px, self.hi_px = lo_px, hi_px

    def ok(self, v):
        return v > 0 if self.log else True

    def __call__(self, v):
        if self.log:
            f = (math.log10(v) - math.log10(self.lo)) / (math.log10(self.hi) - math.log10(self.lo))
        else:
            f = (v - self.lo) / (self.hi - self.lo)
        return self.lo_px + f * (self.hi_px - self.lo_px)

    def ticks(self):
        if self.log:
            e0, e1 = round(math.log10(self.lo)), round(math.log10(self.hi))
            return [10.0 ** e for e in range(e0, e1 + 1)]
        span = self.hi - self.lo
        step = 10 ** math.floor(math.log10(span / 5))
        for m in (1, 2, 5, 10):
            if span / (m * step) <= 6:
                step *= m
                break
        first = math.ceil(self.lo / step) * step
        return [first + i * step for i in range(int((self.hi - first) / step + 1e-9) + 1)]


def _fmt(v):
    if v == 0:
        return "0"
    if abs(v) >= 1e4 or abs(v) < 1e-2:
        return f"{v:.0e}"
    return f"{v:g}"


def _reference(kind: PlotKind, series, xs):
    """Points of the dashed reference curve, or [] when not applicable."""
    if not kind.reference or not xs:
        return []
    grid = sorted(set(xs))
    if kind.reference == "pow2":
        return [(x, 2.0 ** x) for x in grid]
    if kind.reference == "identity":
        return [(x, x) for x in grid]
    first = next(iter(series.values()), [])
    if not first:
        return []
    x0, y0 = first[0]
    if kind.reference == "log":
        if x0 <= 1:
            return []
        c = y0 / math.log(x0)
        return [(x, c * math.log(x)) for x in grid if x > 1]
    if kind.reference == "inverse":
        return [(x, y0 * x0 / x) for x in grid if x > 0]
    return []


def render_svg(kind: PlotKind, series, title: str = "") -> str:
    xs = [x for pts in series.values() for x, _ in pts]
    ref = _reference(kind, series, xs)
    ys = [y for pts in series.values() for _, y in pts] + [y for _, y in ref]
    ax = _Axis(xs, kind.logx, LEFT, W - RIGHT)
    ay = _Axis(ys, kind.logy, H - BOTTOM, TOP)
    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" '
           'font-family="sans-serif" font-size="12">',
           f'<rect width="{W}" height="{H}" fill="white"/>']
    x0, x1, y0, y1 = LEFT, W - RIGHT, H - BOTTOM, TOP
    out.append(f'<path d="M{x0},{y1} V{y0} H{x1}" fill="none" stroke="black"/>')
    for t in ax.ticks():
        px = ax(t)
        out.append(f'<line x1="{px:.1f}" y1="{y0}" x2="{px:.1f}" y2="{y0 + 5}" stroke="black"/>')
        out.append(f'<text x="{px:.1f}" y="{y0 + 18}" text-anchor="middle">{_fmt(t)}</text>')
    for t in ay.ticks():
        py = ay(t)
        out.append(f'<line x1="{x0 - 5}" y1="{py:.1f}" x2="{x0}" y2="{py:.1f}" stroke="black"/>')
        out.append(f'<line x1="{x0}" y1="{py:.1f}" x2="{x1}" y2="{py:.1f}" stroke="#ddd"/>')
        out.append(f'<text x="{x0 - 8}" y="{py + 4:.1f}" text-anchor="end">{_fmt(t)}</text>')
    out.append(f'<text x="{(x0 + x1) / 2}" y="{H - 15}" text-anchor="middle">{escape(kind.xlabel)}</text>')
    out.append(f'<text x="18" y="{(y0 + y1) / 2}" text-anchor="middle" '
               f'transform="rotate(-90 18 {(y0 + y1) / 2})">{escape(kind.ylabel)}</text>')
    if title:
        out.append(f'<text x="{(x0 + x1) / 2}" y="18" text-anchor="middle">{escape(title)}</text>')
    out.append(f'<clipPath id="plot"><rect x="{x0}" y="{y1}" width="{x1 - x0}" height="{y0 - y1}"/></clipPath>')

    def path(points):
        pts = [(ax(x), ay(y)) for x, y in points if ax.ok(x) and ay.ok(y)]
        return " ".join(f"{'M' if i == 0 else 'L'}{px:.1f},{py:.1f}" for i, (px, py) in enumerate(pts)), pts

    if ref:
        d, _ = path(ref)
        if d:
            out.append(f'<path d="{d}" fill="none" stroke="black" stroke-dasharray="6,4" clip-path="url(#plot)"/>')
    legend_y = TOP + 10
    for i, (group, points) in enumerate(series.items()):
        color = PALETTE[i % len(PALETTE)]
        d, pts = path(points)
        if d:
            out.append(f'<path d="{d}" fill="none" stroke="{color}" stroke-width="2"/>')
        for px, py in pts:
            out.append(f'<circle cx="{px:.1f}" cy="{py:.1f}" r="3" fill="{color}"/>')
        out.append(f'<line x1="{x1 + 15}" y1="{legend_y}" x2="{x1 + 35}" y2="{legend_y}" '
                   f'stroke="{color}" stroke-width="2"/>')
        out.append(f'<text x="{x1 + 40}" y="{legend_y + 4}">{escape(group)}</text>')
        legend_y += 18
    if ref:
        out.append(f'<line x1="{x1 + 15}" y1="{legend_y}" x2="{x1 + 35}" y2="{legend_y}" '
                   'stroke="black" stroke-dasharray="6,4"/>')
        out.append(f'<text x="{x1 + 40}" y="{legend_y + 4}">{escape(_REF_NAMES[kind.reference])}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


_REF_NAMES = {"pow2": "2^N", "log": "log N", "identity": "y = x", "inverse": "ideal 1/k"}


def emit_plot(csv_path, kind: str, out_path=None, title: str = "") -> Path:
    """Render the aggregate CSV at ``csv_path`` as an SVG plot of ``kind``."""
    if kind not in PLOT_KINDS:
        raise PlotError(f"unknown plot kind {kind!r}; choose from {', '.join(PLOT_KINDS)}")
    spec = PLOT_KINDS[kind]
    columns, rows = _read_rows(csv_path)
    series = collect_series(spec, columns, rows)
    out = Path(out_path) if out_path else Path(csv_path).with_suffix(".svg")
    out.write_text(render_svg(spec, series, title))
    return out
