"""Minimal standalone SVG renderings for figure data.

Figures are emitted as CSV data first; these drawings are only a quick look.
"""
from __future__ import annotations

import numpy as np

from metapop.evaluation import heatmap_svg

__all__ = ["bar_chart_svg", "line_chart_svg", "heatmap_svg"]

PALETTE = ("#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f")


def _esc(s) -> str:
    return str(s).replace("&", "&amp;").replace("<", "&lt;").replace(">", "&gt;")


def _frame(w, h, title):
    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" font-family="sans-serif" font-size="10">',
           f'<rect width="{w}" height="{h}" fill="#ffffff"/>']
    if title:
        out.append(f'<text x="{w / 2:.0f}" y="16" text-anchor="middle" font-size="13">{_esc(title)}</text>')
    return out


def _y_axis(out, x0, y0, plot_h, ymax, ticks=5):
    for t in range(ticks + 1):
        v = ymax * t / ticks
        y = y0 + plot_h - plot_h * t / ticks
        out.append(f'<line x1="{x0 - 3}" y1="{y:.1f}" x2="{x0}" y2="{y:.1f}" stroke="#000"/>')
        out.append(f'<text x="{x0 - 5}" y="{y + 3:.1f}" text-anchor="end">{v:.2f}</text>')
    out.append(f'<line x1="{x0}" y1="{y0}" x2="{x0}" y2="{y0 + plot_h}" stroke="#000"/>')


def bar_chart_svg(groups, series: dict[str, tuple], title: str = "", ymax: float | None = None,
                  width: int = 560, height: int = 320) -> str:
    """Grouped bars with error whiskers.

    ``series`` maps a legend label to ``(means, stderrs)`` aligned with ``groups``.
    """
    groups = list(groups)
    labels = list(series)
    means = np.array([np.asarray(series[k][0], dtype=float) for k in labels]).reshape(len(labels), len(groups))
    errs = np.array([np.asarray(series[k][1], dtype=float) for k in labels]).reshape(len(labels), len(groups))
    top = ymax if ymax is not None else max(1e-9, float(np.nanmax(means + np.nan_to_num(errs))) * 1.1)
    x0, y0, plot_w, plot_h = 50, 30, width - 160, height - 70
    out = _frame(width, height, title)
    _y_axis(out, x0, y0, plot_h, top)
    gw = plot_w / max(1, len(groups))
    bw = gw * 0.8 / max(1, len(labels))
    for g, name in enumerate(groups):
        gx = x0 + g * gw + gw * 0.1
        for s in range(len(labels)):
            m, e = means[s, g], errs[s, g]
            if not np.isfinite(m):
                continue
            bh = plot_h * min(m, top) / top
            x = gx + s * bw
            out.append(f'<rect x="{x:.1f}" y="{y0 + plot_h - bh:.1f}" width="{bw * 0.9:.1f}" height="{bh:.1f}" '
                       f'fill="{PALETTE[s % len(PALETTE)]}"/>')
            if np.isfinite(e) and e > 0:
                cx = x + bw * 0.45
                lo, hi = (y0 + plot_h - plot_h * min(v, top) / top for v in (max(m - e, 0), m + e))
                out.append(f'<line x1="{cx:.1f}" y1="{lo:.1f}" x2="{cx:.1f}" y2="{hi:.1f}" stroke="#000"/>')
        out.append(f'<text x="{gx + gw * 0.4:.1f}" y="{y0 + plot_h + 14}" text-anchor="middle">{_esc(name)}</text>')
    _legend(out, labels, x0 + plot_w + 15, y0)
    out.append("</svg>")
    return "\n".join(out) + "\n"


def line_chart_svg(x, series: dict[str, np.ndarray], title: str = "", ymax: float | None = None,
                   width: int = 560, height: int = 320, xlabel: str = "") -> str:
    x = np.asarray(x, dtype=float)
    labels = list(series)
    ys = [np.asarray(series[k], dtype=float) for k in labels]
    finite = [y[np.isfinite(y)] for y in ys]
    top = ymax if ymax is not None else max([1e-9] + [float(f.max()) * 1.1 for f in finite if f.size])
    x0, y0, plot_w, plot_h = 50, 30, width - 160, height - 70
    span = float(x.max() - x.min()) if x.size > 1 else 1.0
    out = _frame(width, height, title)
    _y_axis(out, x0, y0, plot_h, top)
    out.append(f'<line x1="{x0}" y1="{y0 + plot_h}" x2="{x0 + plot_w}" y2="{y0 + plot_h}" stroke="#000"/>')
    for s, y in enumerate(ys):
        pts = [f"{x0 + plot_w * (xi - x.min()) / span:.1f},{y0 + plot_h - plot_h * min(yi, top) / top:.1f}"
               for xi, yi in zip(x, y) if np.isfinite(yi)]
        if pts:
            out.append(f'<polyline fill="none" stroke="{PALETTE[s % len(PALETTE)]}" stroke-width="1.5" '
                       f'points="{" ".join(pts)}"/>')
    if x.size:
        out.append(f'<text x="{x0}" y="{y0 + plot_h + 14}" text-anchor="middle">{x.min():g}</text>')
        out.append(f'<text x="{x0 + plot_w}" y="{y0 + plot_h + 14}" text-anchor="middle">{x.max():g}</text>')
    if xlabel:
        out.append(f'<text x="{x0 + plot_w / 2}" y="{y0 + plot_h + 28}" text-anchor="middle">{_esc(xlabel)}</text>')
    _legend(out, labels, x0 + plot_w + 15, y0)
    out.append("</svg>")
    return "\n".join(out) + "\n"


def _legend(out, labels, x, y):
    for s, lab in enumerate(labels):
        yy = y + 14 * s
        out.append(f'<rect x="{x}" y="{yy}" width="10" height="10" fill="{PALETTE[s % len(PALETTE)]}"/>')
        out.append(f'<text x="{x + 14}" y="{yy + 9}">{_esc(lab)}</text>')
