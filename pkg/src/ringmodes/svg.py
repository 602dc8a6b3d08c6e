"""Tiny deterministic SVG plot writers: scatter, line, heatmap.

No plotting dependency; output is plain SVG text with fixed 2-decimal
coordinates so identical inputs produce byte-identical files.
"""

from __future__ import annotations

import numpy as np

__all__ = ["PALETTE", "svg_scatter", "svg_line", "svg_heatmap"]

PALETTE = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd",
    "#ff7f0e", "#17becf", "#8c564b", "#e377c2",
]

_MARGIN = 56.0
_LEGEND_ROW = 16.0


def _f(v: float) -> str:
    return f"{v:.2f}"


def _bounds(values: np.ndarray) -> tuple[float, float]:
    lo = float(values.min())
    hi = float(values.max())
    if hi <= lo:
        lo, hi = lo - 0.5, lo + 0.5
    pad = 0.05 * (hi - lo)
    return lo - pad, hi + pad


def _open(size: float, height: float, title: str) -> list[str]:
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{_f(size)}" '
        f'height="{_f(height)}" viewBox="0 0 {_f(size)} {_f(height)}">',
        f'<rect width="{_f(size)}" height="{_f(height)}" fill="white"/>',
    ]
    if title:
        parts.append(
            f'<text x="{_f(size / 2)}" y="18" text-anchor="middle" '
            f'font-family="sans-serif" font-size="13">{title}</text>'
        )
    return parts


def _frame(parts: list[str], size: float, height: float,
           xlo: float, xhi: float, ylo: float, yhi: float) -> None:
    x0, y0 = _MARGIN, height - _MARGIN
    x1, y1 = size - _MARGIN, _MARGIN
    parts.append(
        f'<rect x="{_f(x0)}" y="{_f(y1)}" width="{_f(x1 - x0)}" height="{_f(y0 - y1)}" '
        'fill="none" stroke="#444" stroke-width="1"/>'
    )
    style = 'font-family="sans-serif" font-size="10" fill="#444"'
    parts.append(f'<text x="{_f(x0)}" y="{_f(y0 + 14)}" {style}>{xlo:.3g}</text>')
    parts.append(
        f'<text x="{_f(x1)}" y="{_f(y0 + 14)}" text-anchor="end" {style}>{xhi:.3g}</text>'
    )
    parts.append(
        f'<text x="{_f(x0 - 4)}" y="{_f(y0)}" text-anchor="end" {style}>{ylo:.3g}</text>'
    )
    parts.append(
        f'<text x="{_f(x0 - 4)}" y="{_f(y1 + 10)}" text-anchor="end" {style}>{yhi:.3g}</text>'
    )


def _legend(parts: list[str], labels: list[str], size: float) -> None:
    for i, label in enumerate(labels):
        color = PALETTE[i % len(PALETTE)]
        y = _MARGIN + 4 + i * _LEGEND_ROW
        parts.append(
            f'<rect x="{_f(size - _MARGIN + 8)}" y="{_f(y)}" width="10" height="10" '
            f'fill="{color}"/>'
        )
        parts.append(
            f'<text x="{_f(size - _MARGIN + 22)}" y="{_f(y + 9)}" '
            f'font-family="sans-serif" font-size="10">{label}</text>'
        )


def svg_scatter(sets, path, title: str = "", size: float = 640.0) -> None:
    """Scatter of labelled point sets: sets is [(label, (n, 2) array), ...]."""
    sets = [(label, np.asarray(pts, dtype=float)) for label, pts in sets]
    allpts = np.concatenate([pts for _, pts in sets], axis=0)
    xlo, xhi = _bounds(allpts[:, 0])
    ylo, yhi = _bounds(allpts[:, 1])
    span_x = max(xhi - xlo, 1e-30)
    span_y = max(yhi - ylo, 1e-30)
    inner = size - 2 * _MARGIN

    parts = _open(size + 90, size, title)  # extra width for the legend
    _frame(parts, size, size, xlo, xhi, ylo, yhi)
    for i, (label, pts) in enumerate(sets):
        color = PALETTE[i % len(PALETTE)]
        for x, y in pts:
            cx = _MARGIN + (x - xlo) / span_x * inner
            cy = size - _MARGIN - (y - ylo) / span_y * inner
            parts.append(f'<circle cx="{_f(cx)}" cy="{_f(cy)}" r="2.2" fill="{color}"/>')
    _legend(parts, [label for label, _ in sets], size + 90)
    parts.append("</svg>")
    with open(path, "w", encoding="ascii", newline="\n") as fh:
        fh.write("\n".join(parts) + "\n")


def svg_line(series, path, title: str = "", size: float = 640.0) -> None:
    """Line chart of labelled float sequences against their index."""
    series = [(label, np.asarray(ys, dtype=float)) for label, ys in series]
    ally = np.concatenate([ys for _, ys in series])
    ylo, yhi = _bounds(ally)
    n = max(len(ys) for _, ys in series)
    span_y = max(yhi - ylo, 1e-30)
    inner = size - 2 * _MARGIN

    parts = _open(size + 90, size, title)
    _frame(parts, size, size, 0, max(n - 1, 1), ylo, yhi)
    for i, (label, ys) in enumerate(series):
        color = PALETTE[i % len(PALETTE)]
        coords = []
        for j, y in enumerate(ys):
            px = _MARGIN + (j / max(n - 1, 1)) * inner
            py = size - _MARGIN - (y - ylo) / span_y * inner
            coords.append(f"{_f(px)},{_f(py)}")
        parts.append(
            f'<polyline points="{" ".join(coords)}" fill="none" stroke="{color}" '
            'stroke-width="1.5"/>'
        )
    _legend(parts, [label for label, _ in series], size + 90)
    parts.append("</svg>")
    with open(path, "w", encoding="ascii", newline="\n") as fh:
        fh.write("\n".join(parts) + "\n")


def _ramp(t: float) -> str:
    # three-stop dark-violet to teal to yellow colour ramp
    stops = [(68, 1, 84), (33, 145, 140), (253, 231, 37)]
    t = min(max(t, 0.0), 1.0)
    if t < 0.5:
        a, b, u = stops[0], stops[1], t / 0.5
    else:
        a, b, u = stops[1], stops[2], (t - 0.5) / 0.5
    rgb = [round(a[i] + (b[i] - a[i]) * u) for i in range(3)]
    return f"#{rgb[0]:02x}{rgb[1]:02x}{rgb[2]:02x}"


def svg_heatmap(matrix, path, title: str = "", size: float = 640.0,
                row_labels=None, col_labels=None) -> None:
    """Heatmap of a 2-D array; row 0 is drawn at the bottom."""
    m = np.asarray(matrix, dtype=float)
    lo = float(m.min())
    hi = float(m.max())
    span = hi - lo if hi > lo else 1.0
    rows, cols = m.shape
    inner = size - 2 * _MARGIN
    cw, ch = inner / cols, inner / rows

    parts = _open(size, size, title)
    for i in range(rows):
        for j in range(cols):
            x = _MARGIN + j * cw
            y = size - _MARGIN - (i + 1) * ch
            color = _ramp((m[i, j] - lo) / span)
            parts.append(
                f'<rect x="{_f(x)}" y="{_f(y)}" width="{_f(cw + 0.5)}" '
                f'height="{_f(ch + 0.5)}" fill="{color}"/>'
            )
    style = 'font-family="sans-serif" font-size="10" fill="#222"'
    if row_labels is not None:
        for i, label in enumerate(row_labels):
            y = size - _MARGIN - (i + 0.5) * ch
            parts.append(f'<text x="{_f(_MARGIN - 6)}" y="{_f(y + 3)}" '
                         f'text-anchor="end" {style}>{label}</text>')
    if col_labels is not None:
        for j, label in enumerate(col_labels):
            x = _MARGIN + (j + 0.5) * cw
            parts.append(f'<text x="{_f(x)}" y="{_f(size - _MARGIN + 14)}" '
                         f'text-anchor="middle" {style}>{label}</text>')
    parts.append("</svg>")
    with open(path, "w", encoding="ascii", newline="\n") as fh:
        fh.write("\n".join(parts) + "\n")
