"""Minimal line/scatter plots written directly as SVG text."""

from __future__ import annotations

import math
from typing import Mapping, Sequence
from xml.sax.saxutils import escape

PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#17becf")
WIDTH, HEIGHT = 640, 420
LEFT, RIGHT, TOP, BOTTOM = 70, 150, 40, 55


def _ticks(lo: float, hi: float, n: int = 5) -> list[float]:
    if hi <= lo:
        return [lo]
    raw = (hi - lo) / n
    mag = 10 ** math.floor(math.log10(raw))
    step = min((m * mag for m in (1, 2, 5, 10) if m * mag >= raw), default=raw)
    start = math.ceil(lo / step) * step
    out = []
    t = start
    while t <= hi + 1e-12 * abs(step):
        out.append(round(t, 12))
        t += step
    return out


def _fmt(v: float) -> str:
    return f"{v:.4g}"


def line_plot(series: Mapping[str, tuple[Sequence[float], Sequence[float]]], *, title: str = "",
              xlabel: str = "", ylabel: str = "", logy: bool = False, markers: bool = True,
              hlines: Mapping[str, float] | None = None) -> str:
    """Render named (x, y) series; non-finite points are skipped."""
    pts = {}
    for name, (xs, ys) in series.items():
        keep = []
        for x, y in zip(xs, ys):
            x, y = float(x), float(y)
            if not (math.isfinite(x) and math.isfinite(y)) or (logy and y <= 0):
                continue
            keep.append((x, math.log10(y) if logy else y))
        pts[name] = keep
    extra = [math.log10(v) if logy else v for v in (hlines or {}).values() if math.isfinite(v) and (v > 0 or not logy)]
    xs_all = [x for p in pts.values() for x, _ in p] or [0.0, 1.0]
    ys_all = [y for p in pts.values() for _, y in p] + extra or [0.0, 1.0]
    x0, x1 = min(xs_all), max(xs_all)
    y0, y1 = min(ys_all), max(ys_all)
    if x1 == x0:
        x0, x1 = x0 - 0.5, x1 + 0.5
    if y1 == y0:
        y0, y1 = y0 - 0.5, y1 + 0.5
    pad = 0.05 * (y1 - y0)
    y0, y1 = y0 - pad, y1 + pad
    pw, ph = WIDTH - LEFT - RIGHT, HEIGHT - TOP - BOTTOM

    def sx(x):
        return LEFT + (x - x0) / (x1 - x0) * pw

    def sy(y):
        return TOP + (1 - (y - y0) / (y1 - y0)) * ph

    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
           f'viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="11">',
           f'<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="white"/>',
           f'<rect x="{LEFT}" y="{TOP}" width="{pw}" height="{ph}" fill="none" stroke="#444"/>']
    for t in _ticks(x0, x1):
        X = sx(t)
        out.append(f'<line x1="{X:.1f}" y1="{TOP + ph}" x2="{X:.1f}" y2="{TOP + ph + 4}" stroke="#444"/>')
        out.append(f'<text x="{X:.1f}" y="{TOP + ph + 16}" text-anchor="middle">{_fmt(t)}</text>')
    for t in _ticks(y0, y1):
        Y = sy(t)
        label = _fmt(10 ** t) if logy else _fmt(t)
        out.append(f'<line x1="{LEFT - 4}" y1="{Y:.1f}" x2="{LEFT}" y2="{Y:.1f}" stroke="#444"/>')
        out.append(f'<line x1="{LEFT}" y1="{Y:.1f}" x2="{LEFT + pw}" y2="{Y:.1f}" stroke="#eee"/>')
        out.append(f'<text x="{LEFT - 7}" y="{Y + 4:.1f}" text-anchor="end">{label}</text>')
    for i, (name, value) in enumerate((hlines or {}).items()):
        v = math.log10(value) if logy else value
        if not math.isfinite(v):
            continue
        Y = sy(v)
        out.append(f'<line x1="{LEFT}" y1="{Y:.1f}" x2="{LEFT + pw}" y2="{Y:.1f}" stroke="#888" '
                   f'stroke-dasharray="5,4"/>')
        out.append(f'<text x="{LEFT + pw - 4}" y="{Y - 4:.1f}" text-anchor="end" fill="#666">{escape(name)}</text>')
    for i, (name, p) in enumerate(pts.items()):
        color = PALETTE[i % len(PALETTE)]
        if len(p) > 1:
            path = " ".join(f"{sx(x):.1f},{sy(y):.1f}" for x, y in p)
            out.append(f'<polyline points="{path}" fill="none" stroke="{color}" stroke-width="1.6"/>')
        if markers:
            out.extend(f'<circle cx="{sx(x):.1f}" cy="{sy(y):.1f}" r="2.6" fill="{color}"/>' for x, y in p)
        ly = TOP + 14 + 16 * i
        out.append(f'<line x1="{LEFT + pw + 12}" y1="{ly - 4}" x2="{LEFT + pw + 30}" y2="{ly - 4}" '
                   f'stroke="{color}" stroke-width="2"/>')
        out.append(f'<text x="{LEFT + pw + 35}" y="{ly}">{escape(name)}</text>')
    out.append(f'<text x="{WIDTH / 2:.0f}" y="{TOP - 14}" text-anchor="middle" font-size="13">{escape(title)}</text>')
    out.append(f'<text x="{LEFT + pw / 2:.0f}" y="{HEIGHT - 14}" text-anchor="middle">{escape(xlabel)}</text>')
    out.append(f'<text transform="translate(16,{TOP + ph / 2:.0f}) rotate(-90)" text-anchor="middle">'
               f'{escape(ylabel + (" (log)" if logy else ""))}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"
