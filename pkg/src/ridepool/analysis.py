"""Lag-correlation study over per-epoch assigned counts, with CSV and SVG
outputs. Plots are written by a minimal deterministic SVG emitter; figures
are displays here, not interfaces, so no plotting dependency is pulled in.
"""

from __future__ import annotations

import math
from dataclasses import dataclass


@dataclass(frozen=True)
class LagResult:
    lag: int
    slope: float
    intercept: float
    r: float
    pairs: int
    degenerate: bool = False   # zero variance in the predictor


def lag_regression(series, lag: int) -> LagResult:
    """Ordinary least squares on pairs (x_t, x_{t+lag})."""
    series = [float(v) for v in series]
    if lag < 1:
        raise ValueError("lag must be >= 1")
    if len(series) <= lag:
        raise ValueError(f"series of length {len(series)} too short for lag {lag}")
    xs = series[:-lag]
    ys = series[lag:]
    n = len(xs)
    mx = sum(xs) / n
    my = sum(ys) / n
    sxx = sum((x - mx) ** 2 for x in xs)
    syy = sum((y - my) ** 2 for y in ys)
    sxy = sum((x - mx) * (y - my) for x, y in zip(xs, ys))
    if sxx <= 0.0:
        return LagResult(lag, 0.0, my, 0.0, n, degenerate=True)
    slope = sxy / sxx
    intercept = my - slope * mx
    r = sxy / math.sqrt(sxx * syy) if syy > 0 else 0.0
    return LagResult(lag, slope, intercept, r, n)


def slope_curve(series, max_lag: int) -> list[LagResult]:
    if max_lag >= len(series):
        raise ValueError("max lag must be below the series length")
    return [lag_regression(series, lag) for lag in range(1, max_lag + 1)]


def write_slopes_csv(path, results: list[LagResult]):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write("lag,slope,intercept,r,pairs,degenerate\n")
        for res in results:
            fh.write(f"{res.lag},{res.slope:.9f},{res.intercept:.9f},"
                     f"{res.r:.9f},{res.pairs},{str(res.degenerate).lower()}\n")


# -- svg ------------------------------------------------------------------------


def _svg_header(w, h, title):
    return [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" '
        f'viewBox="0 0 {w} {h}">',
        f'<title>{title}</title>',
        f'<rect x="0" y="0" width="{w}" height="{h}" fill="white"/>',
    ]


def _scale(vals, lo_px, hi_px):
    vmin, vmax = min(vals), max(vals)
    if vmax - vmin < 1e-12:
        vmin, vmax = vmin - 1.0, vmax + 1.0
    span = vmax - vmin

    def f(v):
        return lo_px + (v - vmin) / span * (hi_px - lo_px)

    return f, vmin, vmax


def write_scatter_svg(path, points, line=None, title="scatter",
                      width=480, height=360):
    """Scatter plus an optional y = a + b x regression line."""
    margin = 40
    xs = [p[0] for p in points] or [0.0]
    ys = [p[1] for p in points] or [0.0]
    fx, xmin, xmax = _scale(xs, margin, width - margin)
    fy, ymin, ymax = _scale(ys, height - margin, margin)
    out = _svg_header(width, height, title)
    out.append(f'<line x1="{margin}" y1="{height - margin}" x2="{width - margin}" '
               f'y2="{height - margin}" stroke="black"/>')
    out.append(f'<line x1="{margin}" y1="{margin}" x2="{margin}" '
               f'y2="{height - margin}" stroke="black"/>')
    out.append(f'<text x="{margin}" y="{height - margin + 24}" font-size="10">'
               f'{xmin:.2f}</text>')
    out.append(f'<text x="{width - margin - 20}" y="{height - margin + 24}" '
               f'font-size="10">{xmax:.2f}</text>')
    out.append(f'<text x="4" y="{height - margin}" font-size="10">{ymin:.2f}</text>')
    out.append(f'<text x="4" y="{margin}" font-size="10">{ymax:.2f}</text>')
    for x, y in points:
        out.append(f'<circle cx="{fx(x):.2f}" cy="{fy(y):.2f}" r="2.5" '
                   f'fill="steelblue" fill-opacity="0.7"/>')
    if line is not None:
        a, b = line
        y0, y1 = a + b * xmin, a + b * xmax
        out.append(f'<line x1="{fx(xmin):.2f}" y1="{fy(y0):.2f}" '
                   f'x2="{fx(xmax):.2f}" y2="{fy(y1):.2f}" stroke="crimson" '
                   f'stroke-width="1.5"/>')
    out.append(f'<text x="{width // 2 - 60}" y="16" font-size="12">{title}</text>')
    out.append("</svg>")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(out) + "\n")


def write_slope_curve_svg(path, results: list[LagResult], title="slope vs lag",
                          width=480, height=360):
    pts = [(float(r.lag), r.slope) for r in results]
    margin = 40
    fx, xmin, xmax = _scale([p[0] for p in pts], margin, width - margin)
    ys = [p[1] for p in pts] + [0.0]
    fy, ymin, ymax = _scale(ys, height - margin, margin)
    out = _svg_header(width, height, title)
    out.append(f'<line x1="{margin}" y1="{fy(0.0):.2f}" x2="{width - margin}" '
               f'y2="{fy(0.0):.2f}" stroke="gray" stroke-dasharray="4 3"/>')
    poly = " ".join(f"{fx(x):.2f},{fy(y):.2f}" for x, y in pts)
    out.append(f'<polyline points="{poly}" fill="none" stroke="steelblue" '
               f'stroke-width="1.5"/>')
    for x, y in pts:
        out.append(f'<circle cx="{fx(x):.2f}" cy="{fy(y):.2f}" r="2.5" fill="steelblue"/>')
    out.append(f'<text x="{width // 2 - 60}" y="16" font-size="12">{title}</text>')
    out.append(f'<text x="{margin}" y="{height - 8}" font-size="10">lag {int(xmin)}'
               f' .. {int(xmax)} epochs</text>')
    out.append("</svg>")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(out) + "\n")


def analyze_lag(series, max_lag: int, out_prefix: str) -> list[LagResult]:
    """The CLI surface: slopes CSV plus one scatter SVG per lag and the
    slope-curve SVG, all under `out_prefix`."""
    results = slope_curve(series, max_lag)
    write_slopes_csv(f"{out_prefix}_slopes.csv", results)
    series = [float(v) for v in series]
    for res in results:
        pts = list(zip(series[:-res.lag], series[res.lag:]))
        write_scatter_svg(f"{out_prefix}_lag{res.lag}.svg", pts,
                          line=(res.intercept, res.slope),
                          title=f"lag {res.lag} epochs")
    write_slope_curve_svg(f"{out_prefix}_slopes.svg", results)
    return results
