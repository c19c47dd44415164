"""Minimal deterministic vector graphics: line charts and 2-D sample paths.

Hand-assembled SVG with fixed layout and fixed-width number formatting, so a
given input always produces byte-identical output.  Non-finite points split a
polyline rather than being bridged.
"""

from __future__ import annotations

from pathlib import Path
from xml.sax.saxutils import escape

import numpy as np

PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd",
           "#ff7f0e", "#8c564b", "#17becf", "#7f7f7f")

_FONT = 'font-family="monospace" font-size="12"'


def _px(v: float) -> str:
    return format(float(v), ".2f")


def _label(v: float) -> str:
    return format(float(v), ".5g")


def _limits(values: np.ndarray) -> tuple[float, float]:
    finite = values[np.isfinite(values)]
    if finite.size == 0:
        return -1.0, 1.0
    lo = float(finite.min())
    hi = float(finite.max())
    if lo == hi:
        pad = 1.0 if lo == 0.0 else abs(lo) * 0.5
        return lo - pad, hi + pad
    return lo, hi


def _polyline_chunks(px: np.ndarray, py: np.ndarray, ok: np.ndarray,
                     color: str, width: float = 1.5) -> list[str]:
    """One <polyline> per maximal finite run."""
    out = []
    start = None
    for i in range(len(ok) + 1):
        if i < len(ok) and ok[i]:
            if start is None:
                start = i
            continue
        if start is not None and i - start >= 2:
            pts = " ".join(f"{_px(px[j])},{_px(py[j])}" for j in range(start, i))
            out.append(f'<polyline fill="none" stroke="{color}" '
                       f'stroke-width="{_px(width)}" points="{pts}"/>')
        start = None
    return out


def line_chart(series: list[tuple[str, np.ndarray, np.ndarray]], title: str,
               xlabel: str, ylabel: str, width: int = 640, height: int = 440) -> str:
    """series: (label, xs, ys) triples sharing one pair of axes."""
    ml, mr, mt, mb = 70, 20, 36, 50
    pw, ph = width - ml - mr, height - mt - mb
    all_x = np.concatenate([np.asarray(xs, dtype=float) for _, xs, _ in series]) \
        if series else np.array([])
    all_y = np.concatenate([np.asarray(ys, dtype=float) for _, _, ys in series]) \
        if series else np.array([])
    x0, x1 = _limits(all_x)
    y0, y1 = _limits(all_y)

    def tx(v):
        return ml + (v - x0) / (x1 - x0) * pw

    def ty(v):
        return mt + ph - (v - y0) / (y1 - y0) * ph

    parts = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
             f'viewBox="0 0 {width} {height}">',
             f'<rect width="{width}" height="{height}" fill="#ffffff"/>',
             f'<rect x="{ml}" y="{mt}" width="{pw}" height="{ph}" fill="none" '
             f'stroke="#000000" stroke-width="1"/>',
             f'<text x="{width // 2}" y="22" text-anchor="middle" {_FONT}>'
             f'{escape(title)}</text>',
             f'<text x="{width // 2}" y="{height - 10}" text-anchor="middle" {_FONT}>'
             f'{escape(xlabel)}</text>',
             f'<text x="16" y="{mt + ph // 2}" text-anchor="middle" {_FONT} '
             f'transform="rotate(-90 16 {mt + ph // 2})">{escape(ylabel)}</text>']
    for i in range(5):
        fx = x0 + (x1 - x0) * i / 4.0
        fy = y0 + (y1 - y0) * i / 4.0
        gx, gy = tx(fx), ty(fy)
        parts.append(f'<line x1="{_px(gx)}" y1="{mt + ph}" x2="{_px(gx)}" '
                     f'y2="{mt + ph + 5}" stroke="#000000" stroke-width="1"/>')
        parts.append(f'<text x="{_px(gx)}" y="{mt + ph + 18}" text-anchor="middle" '
                     f'{_FONT}>{_label(fx)}</text>')
        parts.append(f'<line x1="{ml - 5}" y1="{_px(gy)}" x2="{ml}" y2="{_px(gy)}" '
                     f'stroke="#000000" stroke-width="1"/>')
        parts.append(f'<text x="{ml - 8}" y="{_px(gy + 4)}" text-anchor="end" '
                     f'{_FONT}>{_label(fy)}</text>')
    for idx, (label, xs, ys) in enumerate(series):
        xs = np.asarray(xs, dtype=float)
        ys = np.asarray(ys, dtype=float)
        color = PALETTE[idx % len(PALETTE)]
        ok = np.isfinite(xs) & np.isfinite(ys)
        parts.extend(_polyline_chunks(tx(xs), ty(ys), ok, color))
        ly = mt + 16 + 16 * idx
        parts.append(f'<line x1="{ml + pw - 130}" y1="{ly - 4}" x2="{ml + pw - 106}" '
                     f'y2="{ly - 4}" stroke="{color}" stroke-width="2"/>')
        parts.append(f'<text x="{ml + pw - 100}" y="{ly}" {_FONT}>{escape(label)}</text>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def path_chart(paths: list[tuple[str, np.ndarray]], lo: float, hi: float,
               title: str, size: int = 520) -> str:
    """2-D trajectories inside the box [lo, hi]^2, one polyline per path.

    paths: (label, (m, 2) array) pairs; a circle marks each start point.
    Labels repeat when one method contributes several particle paths; only
    the first occurrence enters the legend.
    """
    m = 46
    pw = size - 2 * m

    def tx(v):
        return m + (v - lo) / (hi - lo) * pw

    def ty(v):
        return m + pw - (v - lo) / (hi - lo) * pw

    parts = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{size}" height="{size}" '
             f'viewBox="0 0 {size} {size}">',
             f'<rect width="{size}" height="{size}" fill="#ffffff"/>',
             f'<rect x="{m}" y="{m}" width="{pw}" height="{pw}" fill="none" '
             f'stroke="#000000" stroke-width="1"/>',
             f'<text x="{size // 2}" y="24" text-anchor="middle" {_FONT}>'
             f'{escape(title)}</text>',
             f'<text x="{m}" y="{size - 14}" {_FONT}>{_label(lo)}</text>',
             f'<text x="{m + pw}" y="{size - 14}" text-anchor="end" {_FONT}>'
             f'{_label(hi)}</text>']
    seen: dict[str, str] = {}
    for label, arr in paths:
        arr = np.asarray(arr, dtype=float)
        if label not in seen:
            seen[label] = PALETTE[len(seen) % len(PALETTE)]
        color = seen[label]
        inside = np.clip(arr, lo, hi)
        ok = np.all(np.isfinite(arr), axis=1)
        parts.extend(_polyline_chunks(tx(inside[:, 0]), ty(inside[:, 1]), ok, color, 1.2))
        if ok[0]:
            parts.append(f'<circle cx="{_px(tx(inside[0, 0]))}" cy="{_px(ty(inside[0, 1]))}" '
                         f'r="3.00" fill="{color}"/>')
    for idx, (label, color) in enumerate(seen.items()):
        ly = m + 16 + 16 * idx
        parts.append(f'<line x1="{m + 8}" y1="{ly - 4}" x2="{m + 32}" y2="{ly - 4}" '
                     f'stroke="{color}" stroke-width="2"/>')
        parts.append(f'<text x="{m + 38}" y="{ly}" {_FONT}>{escape(label)}</text>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def write_svg(path, content: str) -> None:
    Path(path).write_text(content)
