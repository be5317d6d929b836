"""Static SVG line charts with a logarithmic BER axis."""

from __future__ import annotations

import math
from typing import Dict, Sequence, Tuple
from xml.sax.saxutils import escape

FLOOR = 1e-6
WIDTH, HEIGHT = 640, 440
MARGIN = dict(left=70, right=170, top=40, bottom=55)
PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f")

Series = Dict[str, Tuple[Sequence[float], Sequence[float]]]


def _num(v: float) -> str:
    return f"{v:.2f}"


def emit_chart(series: Series, path, x_label: str = "SNR [dB]", y_label: str = "BER",
               title: str = "") -> str:
    """Write ``series`` (name -> (x, y)) to ``path`` and return the SVG text.

    Y values at or below zero are drawn at the ``FLOOR`` and flagged with a
    hollow marker.
    """
    if not series or all(len(xs) == 0 for xs, _ in series.values()):
        raise ValueError("nothing to plot")
    xs_all = [float(x) for xs, _ in series.values() for x in xs]
    ys_all = [max(float(y), FLOOR) for _, ys in series.values() for y in ys]
    x0, x1 = min(xs_all), max(xs_all)
    if x0 == x1:
        x0, x1 = x0 - 1.0, x1 + 1.0
    d0 = math.floor(math.log10(min(ys_all)))
    d1 = math.ceil(math.log10(max(ys_all)))
    if d0 == d1:
        d1 = d0 + 1
    pw = WIDTH - MARGIN["left"] - MARGIN["right"]
    ph = HEIGHT - MARGIN["top"] - MARGIN["bottom"]

    def px(x):
        return MARGIN["left"] + (float(x) - x0) / (x1 - x0) * pw

    def py(y):
        ly = math.log10(max(float(y), FLOOR))
        return MARGIN["top"] + (d1 - ly) / (d1 - d0) * ph

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
        f'viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">',
        f'<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="white"/>',
        f'<rect x="{MARGIN["left"]}" y="{MARGIN["top"]}" width="{pw}" height="{ph}" '
        'fill="none" stroke="black"/>',
    ]
    if title:
        out.append(f'<text x="{WIDTH / 2:.2f}" y="22" text-anchor="middle" font-size="14">{escape(title)}</text>')
    for d in range(d0, d1 + 1):
        y = py(10.0**d)
        out.append(f'<line x1="{MARGIN["left"]}" y1="{_num(y)}" x2="{MARGIN["left"] + pw}" '
                   f'y2="{_num(y)}" stroke="#dddddd"/>')
        out.append(f'<text x="{MARGIN["left"] - 6}" y="{_num(y + 4)}" text-anchor="end">1e{d}</text>')
    for x in _ticks(x0, x1):
        out.append(f'<line x1="{_num(px(x))}" y1="{MARGIN["top"] + ph}" x2="{_num(px(x))}" '
                   f'y2="{MARGIN["top"] + ph + 5}" stroke="black"/>')
        out.append(f'<text x="{_num(px(x))}" y="{MARGIN["top"] + ph + 18}" text-anchor="middle">{x:g}</text>')
    out.append(f'<text x="{MARGIN["left"] + pw / 2:.2f}" y="{HEIGHT - 12}" text-anchor="middle">'
               f"{escape(x_label)}</text>")
    out.append(f'<text x="16" y="{MARGIN["top"] + ph / 2:.2f}" text-anchor="middle" '
               f'transform="rotate(-90 16 {MARGIN["top"] + ph / 2:.2f})">{escape(y_label)}</text>')

    for i, (name, (xs, ys)) in enumerate(series.items()):
        color = PALETTE[i % len(PALETTE)]
        pts = sorted(zip((float(x) for x in xs), (float(y) for y in ys)))
        if pts:
            d = " ".join(("M" if k == 0 else "L") + f"{_num(px(x))},{_num(py(y))}" for k, (x, y) in enumerate(pts))
            out.append(f'<path d="{d}" fill="none" stroke="{color}" stroke-width="2"/>')
        for x, y in pts:
            if y <= 0:
                out.append(f'<circle cx="{_num(px(x))}" cy="{_num(py(y))}" r="4" fill="white" stroke="{color}"/>')
                out.append(f'<text x="{_num(px(x) + 6)}" y="{_num(py(y) - 6)}" font-size="10" '
                           f'fill="{color}">&lt;={FLOOR:g}</text>')
            else:
                out.append(f'<circle cx="{_num(px(x))}" cy="{_num(py(y))}" r="3" fill="{color}"/>')
        ly = MARGIN["top"] + 12 + 18 * i
        lx = MARGIN["left"] + pw + 12
        out.append(f'<line x1="{lx}" y1="{ly}" x2="{lx + 22}" y2="{ly}" stroke="{color}" stroke-width="2"/>')
        out.append(f'<text x="{lx + 28}" y="{ly + 4}">{escape(name)}</text>')
    out.append("</svg>")
    text = "\n".join(out) + "\n"
    with open(path, "w", newline="\n") as fh:
        fh.write(text)
    return text


def _ticks(x0: float, x1: float, target: int = 6):
    raw = (x1 - x0) / target
    mag = 10.0 ** math.floor(math.log10(raw))
    step = min((m * mag for m in (1, 2, 5, 10) if m * mag >= raw), default=raw)
    first = math.ceil(x0 / step) * step
    n = int(math.floor((x1 - first) / step + 1e-9)) + 1
    return [round(first + k * step, 10) for k in range(n)]
