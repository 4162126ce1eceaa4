"""Minimal SVG line charts, written by hand so plots need no extra
packages. Enough for checkpoint curves and P-sweep summaries: numeric x/y
series as polylines with axes, tick labels, and a legend."""

from __future__ import annotations

_COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b")

_W, _H = 640, 400
_ML, _MR, _MT, _MB = 62, 16, 36, 46  # margins: left, right, top, bottom


def _ticks(lo: float, hi: float, n: int = 5) -> list[float]:
    if hi <= lo:
        hi = lo + 1.0
    span = hi - lo
    step = span / (n - 1)
    return [lo + i * step for i in range(n)]


def _fmt(x: float) -> str:
    if x == int(x) and abs(x) < 1e6:
        return str(int(x))
    return f"{x:.4g}"


def line_chart(series: dict[str, tuple[list[float], list[float]]],
               title: str, x_label: str, y_label: str) -> str:
    """Render named series ({name: (xs, ys)}) to an SVG document string."""
    if not series:
        raise ValueError("line_chart needs at least one series")
    all_x = [x for xs, _ in series.values() for x in xs]
    all_y = [y for _, ys in series.values() for y in ys]
    if not all_x:
        raise ValueError("line_chart series are empty")
    x_lo, x_hi = min(all_x), max(all_x)
    y_lo, y_hi = min(all_y), max(all_y)
    if y_hi == y_lo:
        y_lo, y_hi = y_lo - 0.5, y_hi + 0.5
    pad = 0.05 * (y_hi - y_lo)
    y_lo -= pad
    y_hi += pad

    plot_w = _W - _ML - _MR
    plot_h = _H - _MT - _MB

    def sx(x: float) -> float:
        if x_hi == x_lo:
            return _ML + plot_w / 2
        return _ML + (x - x_lo) / (x_hi - x_lo) * plot_w

    def sy(y: float) -> float:
        return _MT + (y_hi - y) / (y_hi - y_lo) * plot_h

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{_W}" height="{_H}" '
        f'viewBox="0 0 {_W} {_H}" font-family="sans-serif" font-size="12">',
        f'<rect width="{_W}" height="{_H}" fill="white"/>',
        f'<text x="{_W / 2}" y="20" text-anchor="middle" '
        f'font-size="15">{title}</text>',
    ]

    for yt in _ticks(y_lo + pad, y_hi - pad):
        y = sy(yt)
        parts.append(f'<line x1="{_ML}" y1="{y:.1f}" x2="{_W - _MR}" '
                     f'y2="{y:.1f}" stroke="#dddddd"/>')
        parts.append(f'<text x="{_ML - 6}" y="{y + 4:.1f}" '
                     f'text-anchor="end">{_fmt(yt)}</text>')
    for xt in _ticks(x_lo, x_hi):
        x = sx(xt)
        parts.append(f'<line x1="{x:.1f}" y1="{_MT}" x2="{x:.1f}" '
                     f'y2="{_H - _MB}" stroke="#eeeeee"/>')
        parts.append(f'<text x="{x:.1f}" y="{_H - _MB + 16}" '
                     f'text-anchor="middle">{_fmt(xt)}</text>')

    parts.append(f'<line x1="{_ML}" y1="{_H - _MB}" x2="{_W - _MR}" '
                 f'y2="{_H - _MB}" stroke="black"/>')
    parts.append(f'<line x1="{_ML}" y1="{_MT}" x2="{_ML}" '
                 f'y2="{_H - _MB}" stroke="black"/>')
    parts.append(f'<text x="{_W / 2}" y="{_H - 8}" '
                 f'text-anchor="middle">{x_label}</text>')
    parts.append(f'<text x="16" y="{_H / 2}" text-anchor="middle" '
                 f'transform="rotate(-90 16 {_H / 2})">{y_label}</text>')

    for i, (name, (xs, ys)) in enumerate(series.items()):
        color = _COLORS[i % len(_COLORS)]
        points = " ".join(f"{sx(x):.1f},{sy(y):.1f}" for x, y in zip(xs, ys))
        parts.append(f'<polyline points="{points}" fill="none" '
                     f'stroke="{color}" stroke-width="1.5"/>')
        ly = _MT + 14 + 16 * i
        lx = _W - _MR - 150
        parts.append(f'<line x1="{lx}" y1="{ly - 4}" x2="{lx + 22}" '
                     f'y2="{ly - 4}" stroke="{color}" stroke-width="1.5"/>')
        parts.append(f'<text x="{lx + 28}" y="{ly}">{name}</text>')

    parts.append("</svg>")
    return "\n".join(parts)


def write_chart(path, series, title: str, x_label: str, y_label: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(line_chart(series, title, x_label, y_label))
