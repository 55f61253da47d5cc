"""Minimal self-contained SVG line charts.

No plotting stack: the deliverable figure is a handful of polylines with
axes and a legend, written with fixed float formatting so identical inputs
produce byte-identical files.
"""

from __future__ import annotations

import math

_PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b")


def _fmt(x: float) -> str:
    return "%.6g" % x


def _ticks(lo: float, hi: float, count: int = 5) -> list[float]:
    if not math.isfinite(lo) or not math.isfinite(hi) or hi <= lo:
        return [lo]
    return [lo + (hi - lo) * i / (count - 1) for i in range(count)]


def line_chart(series, title: str, xlabel: str, ylabel: str, *,
               width: int = 640, height: int = 480, comment: str = "") -> str:
    """Render labeled (x, y) polylines; ``series`` is [(label, xs, ys), ...].

    NaN points are dropped per series.  Returns the SVG document text.
    """
    margin_l, margin_r, margin_t, margin_b = 62, 16, 34, 46
    plot_w = width - margin_l - margin_r
    plot_h = height - margin_t - margin_b

    xs_all = [float(x) for _, xs, ys in series for x, y in zip(xs, ys)
              if math.isfinite(x) and math.isfinite(y)]
    ys_all = [float(y) for _, xs, ys in series for x, y in zip(xs, ys)
              if math.isfinite(x) and math.isfinite(y)]
    if not xs_all:
        raise ValueError("no finite points to plot")
    x_lo, x_hi = min(xs_all), max(xs_all)
    y_lo, y_hi = min(ys_all), max(ys_all)
    if x_hi == x_lo:
        x_hi = x_lo + 1.0
    if y_hi == y_lo:
        y_hi = y_lo + 1.0
    pad = 0.04 * (y_hi - y_lo)
    y_lo -= pad
    y_hi += pad

    def px(x: float) -> float:
        return margin_l + (x - x_lo) / (x_hi - x_lo) * plot_w

    def py(y: float) -> float:
        return margin_t + (y_hi - y) / (y_hi - y_lo) * plot_h

    out = []
    out.append('<?xml version="1.0" encoding="UTF-8"?>')
    out.append(
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}">'
    )
    if comment:
        out.append(f"<!-- {comment} -->")
    out.append(f'<rect width="{width}" height="{height}" fill="white"/>')
    out.append(
        f'<rect x="{margin_l}" y="{margin_t}" width="{plot_w}" height="{plot_h}" '
        'fill="none" stroke="#333" stroke-width="1"/>'
    )
    for tx in _ticks(x_lo, x_hi):
        x = px(tx)
        out.append(f'<line x1="{_fmt(x)}" y1="{margin_t + plot_h}" x2="{_fmt(x)}" '
                   f'y2="{margin_t + plot_h + 5}" stroke="#333"/>')
        out.append(f'<text x="{_fmt(x)}" y="{margin_t + plot_h + 18}" font-size="11" '
                   f'text-anchor="middle" font-family="sans-serif">{_fmt(tx)}</text>')
    for ty in _ticks(y_lo, y_hi):
        y = py(ty)
        out.append(f'<line x1="{margin_l - 5}" y1="{_fmt(y)}" x2="{margin_l}" '
                   f'y2="{_fmt(y)}" stroke="#333"/>')
        out.append(f'<text x="{margin_l - 8}" y="{_fmt(y + 4)}" font-size="11" '
                   f'text-anchor="end" font-family="sans-serif">{_fmt(ty)}</text>')
    out.append(f'<text x="{width / 2:.1f}" y="20" font-size="14" text-anchor="middle" '
               f'font-family="sans-serif">{title}</text>')
    out.append(f'<text x="{width / 2:.1f}" y="{height - 10}" font-size="12" '
               f'text-anchor="middle" font-family="sans-serif">{xlabel}</text>')
    out.append(f'<text x="16" y="{height / 2:.1f}" font-size="12" text-anchor="middle" '
               f'font-family="sans-serif" transform="rotate(-90 16 {height / 2:.1f})">'
               f'{ylabel}</text>')
    for si, (label, xs, ys) in enumerate(series):
        pts = " ".join(
            f"{_fmt(px(float(x)))},{_fmt(py(float(y)))}"
            for x, y in zip(xs, ys)
            if math.isfinite(float(x)) and math.isfinite(float(y))
        )
        color = _PALETTE[si % len(_PALETTE)]
        out.append(f'<polyline points="{pts}" fill="none" stroke="{color}" '
                   'stroke-width="1.5"/>')
        ly = margin_t + 16 + 16 * si
        lx = margin_l + 12
        out.append(f'<line x1="{lx}" y1="{ly - 4}" x2="{lx + 22}" y2="{ly - 4}" '
                   f'stroke="{color}" stroke-width="1.5"/>')
        out.append(f'<text x="{lx + 28}" y="{ly}" font-size="11" '
                   f'font-family="sans-serif">{label}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"
