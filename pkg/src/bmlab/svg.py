"""Minimal self-contained SVG log-log plots."""
from __future__ import annotations

import math
from xml.sax.saxutils import escape

PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e",
           "#8c564b", "#e377c2", "#7f7f7f", "#17becf", "#bcbd22")


def _nice_decades(lo, hi):
    a, b = math.floor(math.log10(lo)), math.ceil(math.log10(hi))
    if a == b:
        b += 1
    return a, b


def loglog_svg(series, title="", xlabel="n", ylabel="value", width=640, height=420):
    """Render ``series`` (list of ``(label, xs, ys)``) on log-log axes.

    Non-positive or non-finite points are skipped.  Returns the SVG text.
    """
    pts = [(x, y) for _, xs, ys in series for x, y in zip(xs, ys)
           if x and y and x > 0 and y > 0 and math.isfinite(y)]
    left, right, top, bottom = 70, 200, 40, 50
    pw, ph = width - left - right, height - top - bottom
    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
           f'viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="11">',
           f'<rect width="{width}" height="{height}" fill="white"/>',
           f'<text x="{left + pw / 2}" y="20" text-anchor="middle" font-size="13">'
           f'{escape(title)}</text>']
    if not pts:
        out.append(f'<text x="{left}" y="{top + 20}">no positive data</text></svg>')
        return "\n".join(out) + "\n"
    x0, x1 = _nice_decades(min(p[0] for p in pts), max(p[0] for p in pts))
    y0, y1 = _nice_decades(min(p[1] for p in pts), max(p[1] for p in pts))

    def px(x):
        return left + pw * (math.log10(x) - x0) / (x1 - x0)

    def py(y):
        return top + ph * (1 - (math.log10(y) - y0) / (y1 - y0))

    out.append(f'<rect x="{left}" y="{top}" width="{pw}" height="{ph}" fill="none" stroke="black"/>')
    for e in range(x0, x1 + 1):
        X = px(10 ** e)
        out.append(f'<line x1="{X:.1f}" y1="{top}" x2="{X:.1f}" y2="{top + ph}" stroke="#ddd"/>')
        out.append(f'<text x="{X:.1f}" y="{top + ph + 15}" text-anchor="middle">1e{e}</text>')
    for e in range(y0, y1 + 1):
        Y = py(10 ** e)
        out.append(f'<line x1="{left}" y1="{Y:.1f}" x2="{left + pw}" y2="{Y:.1f}" stroke="#ddd"/>')
        out.append(f'<text x="{left - 5}" y="{Y + 4:.1f}" text-anchor="end">1e{e}</text>')
    out.append(f'<text x="{left + pw / 2}" y="{height - 12}" text-anchor="middle">{escape(xlabel)}</text>')
    out.append(f'<text x="15" y="{top + ph / 2}" text-anchor="middle" '
               f'transform="rotate(-90 15 {top + ph / 2})">{escape(ylabel)}</text>')
    for i, (label, xs, ys) in enumerate(series):
        color = PALETTE[i % len(PALETTE)]
        good = [(px(x), py(y)) for x, y in zip(xs, ys)
                if x and y and x > 0 and y > 0 and math.isfinite(y)]
        if len(good) > 1:
            path = " ".join(f"{a:.1f},{b:.1f}" for a, b in good)
            out.append(f'<polyline points="{path}" fill="none" stroke="{color}" stroke-width="1.5"/>')
        for a, b in good:
            out.append(f'<circle cx="{a:.1f}" cy="{b:.1f}" r="2.5" fill="{color}"/>')
        ly = top + 12 + 16 * i
        out.append(f'<line x1="{left + pw + 10}" y1="{ly - 4}" x2="{left + pw + 28}" y2="{ly - 4}" '
                   f'stroke="{color}" stroke-width="2"/>')
        out.append(f'<text x="{left + pw + 32}" y="{ly}">{escape(label)}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"
