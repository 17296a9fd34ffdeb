"""Self-contained SVG line and scatter charts.

Pure string construction from the data: two calls with equal inputs produce
byte-identical files. Only the primitives the reports need (axes, ticks,
polylines, circles, reference lines, legend) are implemented.
"""

from __future__ import annotations

import math

WIDTH, HEIGHT = 640, 400
MARGIN_L, MARGIN_R, MARGIN_T, MARGIN_B = 64, 16, 36, 48
PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b")


def _fmt(x: float) -> str:
    return format(float(x), ".6g")


def _coord(x: float) -> str:
    return format(float(x), ".2f")


def _nice_ticks(lo: float, hi: float, target: int = 5) -> list[float]:
    if hi <= lo:
        return [lo]
    span = hi - lo
    raw = span / target
    mag = 10.0 ** math.floor(math.log10(raw))
    step = min((m for m in (1.0, 2.0, 5.0, 10.0)), key=lambda m: abs(m * mag - raw)) * mag
    first = math.ceil(lo / step) * step
    ticks = []
    t = first
    while t <= hi + 1e-9 * span:
        ticks.append(0.0 if abs(t) < step * 1e-9 else t)
        t += step
    return ticks


class _Canvas:
    def __init__(self, title: str, xlabel: str, ylabel: str,
                 x_range: tuple[float, float], y_range: tuple[float, float]):
        self.parts: list[str] = []
        x_lo, x_hi = x_range
        y_lo, y_hi = y_range
        if x_hi <= x_lo:
            x_hi = x_lo + 1.0
        if y_hi <= y_lo:
            y_hi = y_lo + 1.0
        self.x_lo, self.x_hi, self.y_lo, self.y_hi = x_lo, x_hi, y_lo, y_hi
        self.parts.append(
            f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
            f'viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">')
        self.parts.append(f'<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>')
        self.parts.append(
            f'<text x="{WIDTH / 2:.0f}" y="20" text-anchor="middle" font-size="14">'
            f'{title}</text>')
        self._axes(xlabel, ylabel)

    def px(self, x: float) -> float:
        frac = (x - self.x_lo) / (self.x_hi - self.x_lo)
        return MARGIN_L + frac * (WIDTH - MARGIN_L - MARGIN_R)

    def py(self, y: float) -> float:
        frac = (y - self.y_lo) / (self.y_hi - self.y_lo)
        return HEIGHT - MARGIN_B - frac * (HEIGHT - MARGIN_T - MARGIN_B)

    def _axes(self, xlabel: str, ylabel: str) -> None:
        x0, x1 = MARGIN_L, WIDTH - MARGIN_R
        y0, y1 = HEIGHT - MARGIN_B, MARGIN_T
        self.parts.append(f'<line x1="{x0}" y1="{y0}" x2="{x1}" y2="{y0}" stroke="black"/>')
        self.parts.append(f'<line x1="{x0}" y1="{y0}" x2="{x0}" y2="{y1}" stroke="black"/>')
        for t in _nice_ticks(self.x_lo, self.x_hi):
            px = self.px(t)
            self.parts.append(f'<line x1="{_coord(px)}" y1="{y0}" x2="{_coord(px)}" '
                              f'y2="{y0 + 5}" stroke="black"/>')
            self.parts.append(f'<text x="{_coord(px)}" y="{y0 + 18}" '
                              f'text-anchor="middle">{_fmt(t)}</text>')
        for t in _nice_ticks(self.y_lo, self.y_hi):
            py = self.py(t)
            self.parts.append(f'<line x1="{x0 - 5}" y1="{_coord(py)}" x2="{x0}" '
                              f'y2="{_coord(py)}" stroke="black"/>')
            self.parts.append(f'<text x="{x0 - 8}" y="{_coord(py + 4)}" '
                              f'text-anchor="end">{_fmt(t)}</text>')
        self.parts.append(f'<text x="{(x0 + x1) / 2:.0f}" y="{HEIGHT - 10}" '
                          f'text-anchor="middle">{xlabel}</text>')
        self.parts.append(f'<text x="16" y="{(y0 + y1) / 2:.0f}" text-anchor="middle" '
                          f'transform="rotate(-90 16 {(y0 + y1) / 2:.0f})">{ylabel}</text>')

    def ref_line_y(self, y: float) -> None:
        py = _coord(self.py(y))
        self.parts.append(f'<line x1="{MARGIN_L}" y1="{py}" x2="{WIDTH - MARGIN_R}" '
                          f'y2="{py}" stroke="#888888" stroke-dasharray="6 4"/>')

    def polyline(self, xs, ys, color: str) -> None:
        pts = " ".join(f"{_coord(self.px(x))},{_coord(self.py(y))}" for x, y in zip(xs, ys))
        self.parts.append(f'<polyline points="{pts}" fill="none" stroke="{color}" '
                          f'stroke-width="1.5"/>')

    def dots(self, xs, ys, color: str, r: float = 2.0) -> None:
        for x, y in zip(xs, ys):
            self.parts.append(f'<circle cx="{_coord(self.px(x))}" cy="{_coord(self.py(y))}" '
                              f'r="{r}" fill="{color}" fill-opacity="0.5"/>')

    def legend(self, labels: list[str]) -> None:
        for i, label in enumerate(labels):
            y = MARGIN_T + 14 + 16 * i
            color = PALETTE[i % len(PALETTE)]
            self.parts.append(f'<line x1="{MARGIN_L + 10}" y1="{y - 4}" '
                              f'x2="{MARGIN_L + 34}" y2="{y - 4}" stroke="{color}" '
                              f'stroke-width="1.5"/>')
            self.parts.append(f'<text x="{MARGIN_L + 40}" y="{y}">{label}</text>')

    def render(self) -> str:
        return "\n".join(self.parts) + "\n</svg>\n"


def _data_range(values, pad: float = 0.05) -> tuple[float, float]:
    lo, hi = min(values), max(values)
    if hi == lo:
        return lo - 1.0, hi + 1.0
    span = hi - lo
    return lo - pad * span, hi + pad * span


def line_chart(
    series: list[tuple[str, list[float], list[float]]],
    title: str,
    xlabel: str,
    ylabel: str,
    y_range: tuple[float, float] | None = None,
    ref_y: tuple[float, ...] = (),
) -> str:
    """Multi-series line chart; series is a list of (label, xs, ys)."""
    all_x = [x for _, xs, _ in series for x in xs]
    all_y = [y for _, _, ys in series for y in ys]
    if not all_x:
        raise ValueError("line_chart needs at least one point")
    canvas = _Canvas(title, xlabel, ylabel, _data_range(all_x, 0.0),
                     y_range or _data_range(all_y))
    for y in ref_y:
        canvas.ref_line_y(y)
    for i, (_, xs, ys) in enumerate(series):
        canvas.polyline(xs, ys, PALETTE[i % len(PALETTE)])
    if len(series) > 1 or series[0][0]:
        canvas.legend([label for label, _, _ in series])
    return canvas.render()


def scatter_chart(
    xs: list[float],
    ys: list[float],
    title: str,
    xlabel: str,
    ylabel: str,
    max_points: int = 2000,
) -> str:
    """Scatter plot; deterministically subsamples every n-th point when large."""
    if not xs:
        raise ValueError("scatter_chart needs at least one point")
    stride = max(1, math.ceil(len(xs) / max_points))
    xs = list(xs)[::stride]
    ys = list(ys)[::stride]
    canvas = _Canvas(title, xlabel, ylabel, _data_range(xs), _data_range(ys))
    canvas.dots(xs, ys, PALETTE[0])
    return canvas.render()
