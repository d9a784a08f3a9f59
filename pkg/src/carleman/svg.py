"""Deterministic SVG emission: fixed viewport, fixed color ramp, no state.

Pure string building so identical inputs give byte-identical files.
"""

from __future__ import annotations

import math

WIDTH = 640
HEIGHT = 480
MARGIN = 60

# fixed 8-stop ramp (dark blue -> yellow)
_RAMP = (
    (68, 1, 84),
    (70, 50, 127),
    (54, 92, 141),
    (39, 127, 142),
    (31, 161, 135),
    (74, 194, 109),
    (159, 218, 58),
    (253, 231, 37),
)


def _fmt(v: float) -> str:
    return f"{v:.6g}"


def _color(t: float) -> str:
    if not math.isfinite(t):
        return "#b0b0b0"
    t = min(max(t, 0.0), 1.0)
    pos = t * (len(_RAMP) - 1)
    i = min(int(pos), len(_RAMP) - 2)
    frac = pos - i
    rgb = [
        int(round(_RAMP[i][c] + frac * (_RAMP[i + 1][c] - _RAMP[i][c]))) for c in range(3)
    ]
    return f"#{rgb[0]:02x}{rgb[1]:02x}{rgb[2]:02x}"


def _header(title: str) -> list[str]:
    return [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
        f'viewBox="0 0 {WIDTH} {HEIGHT}">',
        f'<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>',
        f'<text x="{WIDTH // 2}" y="24" text-anchor="middle" font-family="monospace" '
        f'font-size="14">{title}</text>',
    ]


def _no_data(title: str) -> str:
    lines = _header(title)
    lines.append(
        f'<rect x="{MARGIN}" y="{MARGIN}" width="{WIDTH - 2 * MARGIN}" '
        f'height="{HEIGHT - 2 * MARGIN}" fill="none" stroke="black"/>'
    )
    lines.append(
        f'<text x="{WIDTH // 2}" y="{HEIGHT // 2}" text-anchor="middle" '
        f'font-family="monospace" font-size="16">no data</text>'
    )
    lines.append("</svg>")
    return "\n".join(lines) + "\n"


def heatmap_svg(
    values: list[list[float]],
    row_labels: list[str],
    col_labels: list[str],
    title: str,
) -> str:
    """Grid heatmap; rows bottom-up, NaN cells grey."""
    if not values or not values[0]:
        return _no_data(title)
    nr, nc = len(values), len(values[0])
    finite = [v for row in values for v in row if math.isfinite(v)]
    lo = min(finite) if finite else 0.0
    hi = max(finite) if finite else 1.0
    span = hi - lo if hi > lo else 1.0
    plot_w = WIDTH - 2 * MARGIN
    plot_h = HEIGHT - 2 * MARGIN
    cw = plot_w / nc
    ch = plot_h / nr
    lines = _header(title)
    for i in range(nr):
        for j in range(nc):
            v = values[i][j]
            t = (v - lo) / span if math.isfinite(v) else float("nan")
            x = MARGIN + j * cw
            y = MARGIN + (nr - 1 - i) * ch
            lines.append(
                f'<rect x="{_fmt(x)}" y="{_fmt(y)}" width="{_fmt(cw)}" '
                f'height="{_fmt(ch)}" fill="{_color(t)}" stroke="white" '
                f'stroke-width="0.5"/>'
            )
    for j, lab in enumerate(col_labels):
        x = MARGIN + (j + 0.5) * cw
        lines.append(
            f'<text x="{_fmt(x)}" y="{HEIGHT - MARGIN + 18}" text-anchor="middle" '
            f'font-family="monospace" font-size="11">{lab}</text>'
        )
    for i, lab in enumerate(row_labels):
        y = MARGIN + (nr - 1 - i + 0.5) * ch
        lines.append(
            f'<text x="{MARGIN - 8}" y="{_fmt(y + 4)}" text-anchor="end" '
            f'font-family="monospace" font-size="11">{lab}</text>'
        )
    lines.append(
        f'<text x="{MARGIN}" y="{HEIGHT - 12}" font-family="monospace" font-size="11">'
        f"range [{_fmt(lo)}, {_fmt(hi)}]</text>"
    )
    lines.append("</svg>")
    return "\n".join(lines) + "\n"


def map_points(
    xs: list[float], ys: list[float], bounds: tuple[float, float, float, float]
) -> list[tuple[float, float]]:
    """Data-to-pixel map shared by the line plot and its fidelity checks."""
    x_lo, x_hi, y_lo, y_hi = bounds
    xr = x_hi - x_lo if x_hi > x_lo else 1.0
    yr = y_hi - y_lo if y_hi > y_lo else 1.0
    out = []
    for x, y in zip(xs, ys):
        px = MARGIN + (x - x_lo) / xr * (WIDTH - 2 * MARGIN)
        py = HEIGHT - MARGIN - (y - y_lo) / yr * (HEIGHT - 2 * MARGIN)
        out.append((px, py))
    return out


def line_svg(
    series: list[tuple[str, list[float], list[float]]],
    title: str,
    x_label: str = "",
    y_label: str = "",
) -> str:
    """Polyline plot of (label, xs, ys) series with a shared data box."""
    nonempty = [(lab, xs, ys) for lab, xs, ys in series if xs and ys]
    if not nonempty:
        return _no_data(title)
    all_x = [x for _, xs, _ in nonempty for x in xs]
    all_y = [y for _, _, ys in nonempty for y in ys]
    bounds = (min(all_x), max(all_x), min(all_y), max(all_y))
    colors = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#8c564b", "#e377c2")
    lines = _header(title)
    lines.append(
        f'<rect x="{MARGIN}" y="{MARGIN}" width="{WIDTH - 2 * MARGIN}" '
        f'height="{HEIGHT - 2 * MARGIN}" fill="none" stroke="black"/>'
    )
    for idx, (lab, xs, ys) in enumerate(nonempty):
        pts = map_points(xs, ys, bounds)
        path = " ".join(f"{_fmt(px)},{_fmt(py)}" for px, py in pts)
        color = colors[idx % len(colors)]
        lines.append(
            f'<polyline points="{path}" fill="none" stroke="{color}" stroke-width="1.5"/>'
        )
        lines.append(
            f'<text x="{WIDTH - MARGIN}" y="{MARGIN + 16 + 14 * idx}" text-anchor="end" '
            f'font-family="monospace" font-size="11" fill="{color}">{lab}</text>'
        )
    lines.append(
        f'<text x="{MARGIN}" y="{HEIGHT - MARGIN + 18}" font-family="monospace" '
        f'font-size="11">{x_label} in [{_fmt(bounds[0])}, {_fmt(bounds[1])}]</text>'
    )
    lines.append(
        f'<text x="{MARGIN}" y="{MARGIN - 8}" font-family="monospace" font-size="11">'
        f"{y_label} in [{_fmt(bounds[2])}, {_fmt(bounds[3])}]</text>"
    )
    lines.append("</svg>")
    return "\n".join(lines) + "\n"


def histogram_svg(values: list[float], bins: int, title: str) -> str:
    finite = [v for v in values if math.isfinite(v)]
    if not finite:
        return _no_data(title)
    lo, hi = min(finite), max(finite)
    if hi == lo:
        hi = lo + 1.0
    counts = [0] * bins
    for v in finite:
        idx = min(int((v - lo) / (hi - lo) * bins), bins - 1)
        counts[idx] += 1
    peak = max(counts)
    plot_w = WIDTH - 2 * MARGIN
    plot_h = HEIGHT - 2 * MARGIN
    bw = plot_w / bins
    lines = _header(title)
    for i, c in enumerate(counts):
        bh = plot_h * (c / peak) if peak else 0.0
        x = MARGIN + i * bw
        y = HEIGHT - MARGIN - bh
        lines.append(
            f'<rect x="{_fmt(x)}" y="{_fmt(y)}" width="{_fmt(bw)}" height="{_fmt(bh)}" '
            f'fill="{_color(0.55)}" stroke="white" stroke-width="0.5"/>'
        )
    lines.append(
        f'<text x="{MARGIN}" y="{HEIGHT - MARGIN + 18}" font-family="monospace" '
        f'font-size="11">[{_fmt(lo)}, {_fmt(hi)}], n={len(finite)}</text>'
    )
    lines.append("</svg>")
    return "\n".join(lines) + "\n"
