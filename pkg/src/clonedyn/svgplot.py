"""Tiny SVG line-chart writer.

Plots here are diagnostic (mass histories, final density shapes), so we emit
plain SVG by hand instead of pulling in a plotting stack.  Output is a single
self-contained file: axes, light gridlines, up to eight colored polylines,
and a legend.  NaN samples split a polyline into separate segments.
"""

from __future__ import annotations

import math
from xml.sax.saxutils import escape

PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd",
           "#ff7f0e", "#8c564b", "#17becf", "#7f7f7f")

_MARGIN_L, _MARGIN_R, _MARGIN_T, _MARGIN_B = 62, 16, 34, 44


def _finite_range(values):
    lo = math.inf
    hi = -math.inf
    for v in values:
        if math.isfinite(v):
            lo = min(lo, v)
            hi = max(hi, v)
    if lo > hi:
        return 0.0, 1.0
    if lo == hi:
        pad = 0.5 if lo == 0.0 else abs(lo) * 0.05
        return lo - pad, hi + pad
    return lo, hi


def _ticks(lo, hi, target=5):
    """Round tick positions covering [lo, hi]."""
    span = hi - lo
    raw = span / max(target, 1)
    mag = 10.0 ** math.floor(math.log10(raw))
    for mult in (1.0, 2.0, 2.5, 5.0, 10.0):
        step = mult * mag
        if span / step <= target + 0.5:
            break
    first = math.ceil(lo / step) * step
    ticks = []
    t = first
    while t <= hi + 1e-9 * span:
        ticks.append(0.0 if abs(t) < 1e-12 * span else t)
        t += step
    return ticks


def _fmt(v):
    text = format(v, ".6g")
    return text


def line_chart(path, series, *, title="", xlabel="", ylabel="",
               width=720, height=440, logy=False):
    """Write an SVG line chart.

    series: iterable of (xs, ys, label) triples.  With logy=True the y axis
    is log10-scaled and non-positive samples are dropped.
    """
    series = [(list(map(float, xs)), list(map(float, ys)), str(label))
              for xs, ys, label in series]
    if logy:
        series = [([x for x, y in zip(xs, ys) if y > 0.0],
                   [math.log10(y) for y in ys if y > 0.0], label)
                  for xs, ys, label in series]

    all_x = [x for xs, _, _ in series for x in xs]
    all_y = [y for _, ys, _ in series for y in ys]
    x_lo, x_hi = _finite_range(all_x)
    y_lo, y_hi = _finite_range(all_y)
    # headroom so curves do not sit on the frame
    y_pad = 0.04 * (y_hi - y_lo)
    y_lo -= y_pad
    y_hi += y_pad

    plot_w = width - _MARGIN_L - _MARGIN_R
    plot_h = height - _MARGIN_T - _MARGIN_B

    def sx(x):
        return _MARGIN_L + (x - x_lo) / (x_hi - x_lo) * plot_w

    def sy(y):
        return _MARGIN_T + (y_hi - y) / (y_hi - y_lo) * plot_h

    out = []
    out.append(f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" '
               f'height="{height}" viewBox="0 0 {width} {height}">')
    out.append(f'<rect width="{width}" height="{height}" fill="white"/>')
    out.append('<g font-family="sans-serif" font-size="12" fill="#333">')

    # gridlines + ticks
    for t in _ticks(x_lo, x_hi):
        px = sx(t)
        out.append(f'<line x1="{px:.2f}" y1="{_MARGIN_T}" x2="{px:.2f}" '
                   f'y2="{_MARGIN_T + plot_h}" stroke="#e4e4e4"/>')
        out.append(f'<text x="{px:.2f}" y="{_MARGIN_T + plot_h + 16}" '
                   f'text-anchor="middle">{_fmt(t)}</text>')
    for t in _ticks(y_lo, y_hi):
        py = sy(t)
        out.append(f'<line x1="{_MARGIN_L}" y1="{py:.2f}" '
                   f'x2="{_MARGIN_L + plot_w}" y2="{py:.2f}" '
                   f'stroke="#e4e4e4"/>')
        label = _fmt(t) if not logy else f"1e{_fmt(t)}"
        out.append(f'<text x="{_MARGIN_L - 6}" y="{py + 4:.2f}" '
                   f'text-anchor="end">{label}</text>')

    # frame
    out.append(f'<rect x="{_MARGIN_L}" y="{_MARGIN_T}" width="{plot_w}" '
               f'height="{plot_h}" fill="none" stroke="#444"/>')

    # data
    for i, (xs, ys, label) in enumerate(series):
        color = PALETTE[i % len(PALETTE)]
        segment = []
        chunks = []
        for x, y in zip(xs, ys):
            if math.isfinite(x) and math.isfinite(y):
                segment.append(f"{sx(x):.2f},{sy(y):.2f}")
            elif segment:
                chunks.append(segment)
                segment = []
        if segment:
            chunks.append(segment)
        for seg in chunks:
            if len(seg) == 1:
                cx, cy = seg[0].split(",")
                out.append(f'<circle cx="{cx}" cy="{cy}" r="2.2" '
                           f'fill="{color}"/>')
            else:
                out.append(f'<polyline points="{" ".join(seg)}" fill="none" '
                           f'stroke="{color}" stroke-width="1.6"/>')

    # legend
    lx = _MARGIN_L + plot_w - 8
    ly = _MARGIN_T + 10
    for i, (_, _, label) in enumerate(series):
        if not label:
            continue
        color = PALETTE[i % len(PALETTE)]
        out.append(f'<line x1="{lx - 140}" y1="{ly + 18 * i:.2f}" '
                   f'x2="{lx - 118}" y2="{ly + 18 * i:.2f}" '
                   f'stroke="{color}" stroke-width="2.2"/>')
        out.append(f'<text x="{lx - 112}" y="{ly + 18 * i + 4:.2f}">'
                   f'{escape(label)}</text>')

    # titles
    if title:
        out.append(f'<text x="{width / 2:.0f}" y="20" text-anchor="middle" '
                   f'font-size="14">{escape(title)}</text>')
    if xlabel:
        out.append(f'<text x="{_MARGIN_L + plot_w / 2:.0f}" '
                   f'y="{height - 10}" text-anchor="middle">'
                   f'{escape(xlabel)}</text>')
    if ylabel:
        cx = 16
        cy = _MARGIN_T + plot_h / 2
        out.append(f'<text x="{cx}" y="{cy:.0f}" text-anchor="middle" '
                   f'transform="rotate(-90 {cx} {cy:.0f})">'
                   f'{escape(ylabel)}</text>')

    out.append("</g></svg>")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(out) + "\n")
