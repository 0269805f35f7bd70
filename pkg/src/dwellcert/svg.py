"""Deterministic SVG rendering of level sets, trajectories and Lyapunov traces.

Level-set paths and the trajectory are written in data coordinates inside a
transformed group, so coordinates in the file are the plotted values.
"""
from __future__ import annotations

from xml.sax.saxutils import escape

import numpy as np

COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b")
PANEL = 400.0
PAD = 40.0


def fmt(v: float) -> str:
    s = f"{float(v):.10g}"
    return "0" if s == "-0" else s


def _path(points: np.ndarray, closed: bool) -> str:
    head = f"M{fmt(points[0, 0])},{fmt(points[0, 1])}"
    body = "".join(f" L{fmt(x)},{fmt(y)}" for x, y in points[1:])
    return head + body + (" Z" if closed else "")


def render(level_sets, trajectory=None, trace=None) -> str:
    """Build the SVG document.

    ``level_sets`` is a list of ``(label, points)`` closed curves in the
    plane; ``trajectory`` an optional ``(k, 2)`` array; ``trace`` an optional
    ``(t, V, switch_times)`` triple drawn as a second panel.
    """
    pts = [p for _, p in level_sets]
    if trajectory is not None:
        pts.append(np.asarray(trajectory))
    extent = max(float(np.max(np.abs(p))) for p in pts) if pts else 1.0
    extent = extent * 1.05 if extent > 0 else 1.0
    scale = (PANEL / 2.0) / extent
    width = PANEL + 2 * PAD + (PANEL + 2 * PAD if trace is not None else 0.0)
    height = PANEL + 2 * PAD
    cx, cy = PAD + PANEL / 2.0, PAD + PANEL / 2.0
    out = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{fmt(width)}" '
        f'height="{fmt(height)}" viewBox="0 0 {fmt(width)} {fmt(height)}">',
        f'<rect x="0" y="0" width="{fmt(width)}" height="{fmt(height)}" fill="#ffffff"/>',
        f'<rect x="{fmt(PAD)}" y="{fmt(PAD)}" width="{fmt(PANEL)}" height="{fmt(PANEL)}" '
        'fill="none" stroke="#000000" stroke-width="1"/>',
        f'<line x1="{fmt(PAD)}" y1="{fmt(cy)}" x2="{fmt(PAD + PANEL)}" y2="{fmt(cy)}" stroke="#bbbbbb"/>',
        f'<line x1="{fmt(cx)}" y1="{fmt(PAD)}" x2="{fmt(cx)}" y2="{fmt(PAD + PANEL)}" stroke="#bbbbbb"/>',
        f'<text x="{fmt(PAD)}" y="{fmt(PAD - 8)}" font-family="sans-serif" font-size="12">'
        f'level sets (half-width {fmt(extent)})</text>',
        f'<g id="state-plane" transform="translate({fmt(cx)},{fmt(cy)}) scale({fmt(scale)},{fmt(-scale)})">',
    ]
    for k, (label, p) in enumerate(level_sets):
        out.append(f'<path class="level-set" data-mode="{escape(label)}" d="{_path(np.asarray(p), True)}" '
                   f'fill="none" stroke="{COLORS[k % len(COLORS)]}" stroke-width="1.5" '
                   'vector-effect="non-scaling-stroke"/>')
    if trajectory is not None and len(trajectory):
        traj = np.asarray(trajectory)
        out.append('<polyline class="trajectory" points="'
                   + " ".join(f"{fmt(x)},{fmt(y)}" for x, y in traj)
                   + '" fill="none" stroke="#000000" stroke-width="1" vector-effect="non-scaling-stroke"/>')
    out.append("</g>")
    for k, (label, _) in enumerate(level_sets):
        out.append(f'<text x="{fmt(PAD + 8)}" y="{fmt(PAD + 16 + 14 * k)}" font-family="sans-serif" '
                   f'font-size="12" fill="{COLORS[k % len(COLORS)]}">{escape(label)}</text>')
    if trace is not None:
        out.extend(_trace_panel(*trace))
    out.append("</svg>")
    return "\n".join(out) + "\n"


def _trace_panel(t, v, switch_times) -> list:
    t, v = np.asarray(t, dtype=float), np.asarray(v, dtype=float)
    x0 = 3 * PAD + PANEL
    tmax = float(t.max()) if len(t) and t.max() > 0 else 1.0
    vmax = float(v.max()) if len(v) and v.max() > 0 else 1.0

    def px(tt, vv):
        return x0 + PANEL * tt / tmax, PAD + PANEL * (1.0 - vv / vmax)

    out = [
        f'<rect x="{fmt(x0)}" y="{fmt(PAD)}" width="{fmt(PANEL)}" height="{fmt(PANEL)}" '
        'fill="none" stroke="#000000" stroke-width="1"/>',
        f'<text x="{fmt(x0)}" y="{fmt(PAD - 8)}" font-family="sans-serif" font-size="12">'
        f'V along trajectory (t up to {fmt(tmax)}, V up to {fmt(vmax)})</text>',
    ]
    for ts in switch_times:
        x, _ = px(ts, 0.0)
        out.append(f'<line class="switch" x1="{fmt(x)}" y1="{fmt(PAD)}" x2="{fmt(x)}" '
                   f'y2="{fmt(PAD + PANEL)}" stroke="#999999" stroke-dasharray="4,3"/>')
    pts = " ".join("{},{}".format(*map(fmt, px(a, b))) for a, b in zip(t, v))
    out.append(f'<polyline class="lyapunov-trace" points="{pts}" fill="none" stroke="#1f77b4" stroke-width="1"/>')
    return out
