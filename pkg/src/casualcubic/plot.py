"""Deterministic SVG convergence plots written directly as text."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional
from xml.sax.saxutils import escape

import numpy as np

from .oracle import Trace

X_AXES = ("iteration", "elapsed_s", "grad_evals", "f_evals")
Y_AXES = ("gap", "f", "grad_norm")
PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf")

WIDTH, HEIGHT = 640, 420
LEFT, RIGHT, TOP, BOTTOM = 70, 170, 20, 50


class PlotError(ValueError):
    pass


@dataclass
class PlotSpec:
    traces: list
    x_axis: str = "iteration"
    y_axis: str = "gap"
    log_x: Optional[bool] = None
    log_y: Optional[bool] = None
    f_star: Optional[float] = None
    output: str = "plot.svg"
    labels: list = field(default_factory=list)

    def __post_init__(self):
        if self.x_axis not in X_AXES:
            raise PlotError(f"x_axis must be one of {X_AXES}")
        if self.y_axis not in Y_AXES:
            raise PlotError(f"y_axis must be one of {Y_AXES}")
        # log axes default on for gap plots
        if self.log_y is None:
            self.log_y = self.y_axis in ("gap", "grad_norm")
        if self.log_x is None:
            self.log_x = self.y_axis == "gap" and self.x_axis != "elapsed_s"


def _series(trace: Trace, spec: PlotSpec):
    if len(trace) == 0:
        raise PlotError(f"trace {trace.method or '?'} has no records")
    xs = {"iteration": trace.column("k"), "elapsed_s": trace.column("elapsed_s"),
          "grad_evals": trace.column("grad_evals"), "f_evals": trace.column("f_evals")}[spec.x_axis]
    if spec.y_axis == "gap":
        f_star = spec.f_star if spec.f_star is not None else trace.f_star
        if f_star is None:
            raise PlotError("gap plots need f_star (flag or trace metadata)")
        ys = trace.f_values - f_star
    else:
        ys = trace.column(spec.y_axis)
    xs, ys = np.asarray(xs, float), np.asarray(ys, float)
    keep = np.isfinite(xs) & np.isfinite(ys)
    if spec.log_x:
        keep &= xs > 0
    if spec.log_y:
        keep &= ys > 0
    return xs[keep], ys[keep]


def _fmt(v: float) -> str:
    return f"{v:.2f}"


def _tick_label(v: float, log: bool) -> str:
    return f"1e{int(round(v))}" if log else f"{v:.3g}"


def render_svg(traces: list[Trace], spec: PlotSpec) -> str:
    series = [_series(t, spec) for t in traces]
    tx = lambda a: np.log10(a) if spec.log_x else a  # noqa: E731
    ty = lambda a: np.log10(a) if spec.log_y else a  # noqa: E731
    pts = [(tx(x), ty(y)) for x, y in series]
    allx = np.concatenate([p[0] for p in pts]) if pts else np.array([])
    ally = np.concatenate([p[1] for p in pts]) if pts else np.array([])
    if allx.size == 0:
        raise PlotError("nothing to plot after dropping non-positive values on log axes")
    x0, x1 = float(allx.min()), float(allx.max())
    y0, y1 = float(ally.min()), float(ally.max())
    if x1 == x0:
        x0, x1 = x0 - 0.5, x1 + 0.5
    if y1 == y0:
        y0, y1 = y0 - 0.5, y1 + 0.5
    pw, ph = WIDTH - LEFT - RIGHT, HEIGHT - TOP - BOTTOM
    sx = lambda v: LEFT + (v - x0) / (x1 - x0) * pw  # noqa: E731
    sy = lambda v: TOP + (1.0 - (v - y0) / (y1 - y0)) * ph  # noqa: E731

    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
           f'viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="11">',
           f'<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="white"/>',
           f'<rect x="{LEFT}" y="{TOP}" width="{pw}" height="{ph}" fill="none" stroke="black"/>']
    for i in range(5):
        xv = x0 + (x1 - x0) * i / 4
        yv = y0 + (y1 - y0) * i / 4
        out.append(f'<text x="{_fmt(sx(xv))}" y="{HEIGHT - BOTTOM + 15}" text-anchor="middle">'
                   f'{_tick_label(xv, spec.log_x)}</text>')
        out.append(f'<text x="{LEFT - 5}" y="{_fmt(sy(yv) + 4)}" text-anchor="end">'
                   f'{_tick_label(yv, spec.log_y)}</text>')
    ylab = {"gap": "f - f*", "f": "f", "grad_norm": "|grad f|"}[spec.y_axis]
    out.append(f'<text x="{LEFT + pw / 2:.2f}" y="{HEIGHT - 12}" text-anchor="middle">'
               f'{escape(spec.x_axis)}</text>')
    out.append(f'<text x="15" y="{TOP + ph / 2:.2f}" text-anchor="middle" '
               f'transform="rotate(-90 15 {TOP + ph / 2:.2f})">{escape(ylab)}</text>')
    for i, ((px, py), trace) in enumerate(zip(pts, traces)):
        color = PALETTE[i % len(PALETTE)]
        coords = " ".join(f"{_fmt(sx(a))},{_fmt(sy(b))}" for a, b in zip(px, py))
        out.append(f'<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{coords}"/>')
        label = spec.labels[i] if i < len(spec.labels) else (trace.method or f"trace{i}")
        ly = TOP + 15 + 16 * i
        out.append(f'<line x1="{WIDTH - RIGHT + 10}" y1="{ly - 4}" x2="{WIDTH - RIGHT + 30}" '
                   f'y2="{ly - 4}" stroke="{color}" stroke-width="2"/>')
        out.append(f'<text x="{WIDTH - RIGHT + 35}" y="{ly}">{escape(label)}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def write_plot(traces: list[Trace], spec: PlotSpec) -> None:
    svg = render_svg(traces, spec)
    with open(spec.output, "w") as fh:
        fh.write(svg)
