"""Minimal deterministic SVG line plots (no plotting library needed)."""

from __future__ import annotations

import math
from html import escape

WIDTH, HEIGHT = 640, 420
MARGIN = dict(left=70, right=190, top=40, bottom=55)
PALETTE = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b",
           "#e377c2", "#17becf", "#7f7f7f", "#bcbd22"]
DASHES = {"sem": "6,3", "bit": None}


def _ticks(lo: float, hi: float, n: int = 5) -> list[float]:
    if hi <= lo:
        hi = lo + 1.0
    raw = (hi - lo) / n
    mag = 10 ** math.floor(math.log10(raw))
    step = min((m * mag for m in (1, 2, 2.5, 5, 10) if m * mag >= raw), default=raw)
    start = math.ceil(lo / step) * step
    out = []
    v = start
    while v <= hi + 1e-9 * step:
        out.append(round(v, 10))
        v += step
    return out


def _num(v: float) -> str:
    return f"{v:.2f}".rstrip("0").rstrip(".")


def line_plot(series: dict[str, list[tuple[float, float]]], title: str = "", xlabel: str = "",
              ylabel: str = "") -> str:
    """Render ``{label: [(x, y), ...]}`` as an SVG document string.

    Non-finite y values break the line; points with non-finite x (a
    noiseless run) are left out. Output depends only on the input.
    """
    series = {k: [(x, y) for x, y in v if math.isfinite(x)] for k, v in series.items()}
    pts = [(x, y) for s in series.values() for x, y in s if math.isfinite(y)]
    xs = [p[0] for p in pts] or [0.0, 1.0]
    ys = [p[1] for p in pts] or [0.0, 1.0]
    x0, x1 = min(xs), max(xs)
    y0, y1 = min(ys), max(ys)
    if x1 == x0:
        x1 = x0 + 1
    pad = 0.05 * (y1 - y0 or 1.0)
    y0, y1 = y0 - pad, y1 + pad
    pw = WIDTH - MARGIN["left"] - MARGIN["right"]
    ph = HEIGHT - MARGIN["top"] - MARGIN["bottom"]

    def sx(x):
        return MARGIN["left"] + (x - x0) / (x1 - x0) * pw

    def sy(y):
        return MARGIN["top"] + (1 - (y - y0) / (y1 - y0)) * ph

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
        f'viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">',
        f'<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>',
        f'<text x="{MARGIN["left"] + pw / 2:.1f}" y="22" text-anchor="middle" font-size="14">{escape(title)}</text>',
        f'<rect x="{MARGIN["left"]}" y="{MARGIN["top"]}" width="{pw}" height="{ph}" fill="none" stroke="black"/>',
    ]
    for t in _ticks(x0, x1):
        out.append(f'<line x1="{sx(t):.1f}" y1="{MARGIN["top"] + ph}" x2="{sx(t):.1f}" '
                   f'y2="{MARGIN["top"] + ph + 5}" stroke="black"/>')
        out.append(f'<text x="{sx(t):.1f}" y="{MARGIN["top"] + ph + 18}" text-anchor="middle">{_num(t)}</text>')
    for t in _ticks(y0, y1):
        out.append(f'<line x1="{MARGIN["left"] - 5}" y1="{sy(t):.1f}" x2="{MARGIN["left"]}" '
                   f'y2="{sy(t):.1f}" stroke="black"/>')
        out.append(f'<line x1="{MARGIN["left"]}" y1="{sy(t):.1f}" x2="{MARGIN["left"] + pw}" '
                   f'y2="{sy(t):.1f}" stroke="#dddddd"/>')
        out.append(f'<text x="{MARGIN["left"] - 8}" y="{sy(t) + 4:.1f}" text-anchor="end">{_num(t)}</text>')
    out.append(f'<text x="{MARGIN["left"] + pw / 2:.1f}" y="{HEIGHT - 15}" text-anchor="middle">{escape(xlabel)}</text>')
    out.append(f'<text transform="translate(18,{MARGIN["top"] + ph / 2:.1f}) rotate(-90)" '
               f'text-anchor="middle">{escape(ylabel)}</text>')

    for i, (label, data) in enumerate(series.items()):
        color = PALETTE[i % len(PALETTE)]
        dash = DASHES.get(label.rsplit("-", 1)[-1])
        style = f' stroke-dasharray="{dash}"' if dash else ""
        run: list[str] = []
        runs = []
        for x, y in sorted(data):
            if math.isfinite(y):
                run.append(f"{sx(x):.1f},{sy(y):.1f}")
            elif run:
                runs.append(run)
                run = []
        if run:
            runs.append(run)
        for r in runs:
            out.append(f'<polyline points="{" ".join(r)}" fill="none" stroke="{color}" stroke-width="1.8"{style}/>')
            for p in r:
                cx, cy = p.split(",")
                out.append(f'<circle cx="{cx}" cy="{cy}" r="2.5" fill="{color}"/>')
        ly = MARGIN["top"] + 12 + 18 * i
        lx = MARGIN["left"] + pw + 12
        out.append(f'<line x1="{lx}" y1="{ly}" x2="{lx + 24}" y2="{ly}" stroke="{color}" stroke-width="2"{style}/>')
        out.append(f'<text x="{lx + 30}" y="{ly + 4}">{escape(label)}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"
