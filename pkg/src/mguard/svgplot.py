"""Self-contained SVG emission for series overlays and training curves.

Output is a pure function of the inputs: fixed canvas, deterministic float
formatting, no timestamps. Detected-anomaly markers carry ids "det_<k>"
and ground-truth markers "gt_<k>" so tests can count glyphs structurally.
"""

from __future__ import annotations

import numpy as np

WIDTH = 960
HEIGHT = 320
MARGIN_L = 55
MARGIN_R = 15
MARGIN_T = 25
MARGIN_B = 35


def _fmt(x: float) -> str:
    return f"{x:.2f}"


class _Canvas:
    def __init__(self, title: str):
        self.parts = [
            f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
            f'viewBox="0 0 {WIDTH} {HEIGHT}">',
            f'<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>',
            f'<text x="{MARGIN_L}" y="16" font-family="monospace" font-size="12">{title}</text>',
        ]

    def add(self, element: str) -> None:
        self.parts.append(element)

    def finish(self) -> str:
        self.parts.append("</svg>")
        return "\n".join(self.parts) + "\n"


def _scales(x_lo: float, x_hi: float, y_lo: float, y_hi: float):
    plot_w = WIDTH - MARGIN_L - MARGIN_R
    plot_h = HEIGHT - MARGIN_T - MARGIN_B
    x_span = max(x_hi - x_lo, 1e-9)
    y_span = max(y_hi - y_lo, 1e-9)

    def sx(x):
        return MARGIN_L + (x - x_lo) / x_span * plot_w

    def sy(y):
        return MARGIN_T + plot_h - (y - y_lo) / y_span * plot_h

    return sx, sy


def _axes(canvas: _Canvas, sx, sy, x_lo, x_hi, y_lo, y_hi) -> None:
    x0, x1 = sx(x_lo), sx(x_hi)
    y0, y1 = sy(y_lo), sy(y_hi)
    canvas.add(f'<line x1="{_fmt(x0)}" y1="{_fmt(y0)}" x2="{_fmt(x1)}" y2="{_fmt(y0)}" stroke="black"/>')
    canvas.add(f'<line x1="{_fmt(x0)}" y1="{_fmt(y0)}" x2="{_fmt(x0)}" y2="{_fmt(y1)}" stroke="black"/>')
    canvas.add(
        f'<text x="{_fmt(x0)}" y="{HEIGHT - 12}" font-family="monospace" font-size="11">{x_lo:g}</text>'
    )
    canvas.add(
        f'<text x="{_fmt(x1 - 40)}" y="{HEIGHT - 12}" font-family="monospace" font-size="11">{x_hi:g}</text>'
    )
    canvas.add(
        f'<text x="4" y="{_fmt(y0 + 4)}" font-family="monospace" font-size="11">{y_lo:.3g}</text>'
    )
    canvas.add(
        f'<text x="4" y="{_fmt(y1 + 4)}" font-family="monospace" font-size="11">{y_hi:.3g}</text>'
    )


def _polyline(xs, ys, sx, sy, color: str, pid: str | None = None) -> str:
    points = " ".join(f"{_fmt(sx(x))},{_fmt(sy(y))}" for x, y in zip(xs, ys))
    ident = f' id="{pid}"' if pid else ""
    return f'<polyline{ident} points="{points}" fill="none" stroke="{color}" stroke-width="1"/>'


def series_overlay_svg(
    values: np.ndarray,
    detected_ranges: list[tuple[int, int]],
    truth_ranges: list[tuple[int, int]],
    title: str,
    x_from: int = 0,
) -> str:
    """Consumption series with ground-truth (green) and detected (red)
    anomaly bands. Ranges are half-open [start, end) sample indices in the
    same coordinates as values; x_from offsets the axis labels for zooms."""
    values = np.asarray(values, np.float64)
    n = len(values)
    x_lo, x_hi = x_from, x_from + max(n - 1, 1)
    y_lo, y_hi = float(values.min()), float(values.max())
    if y_lo == y_hi:
        y_lo, y_hi = y_lo - 1.0, y_hi + 1.0
    canvas = _Canvas(title)
    sx, sy = _scales(x_lo, x_hi, y_lo, y_hi)
    top, bottom = sy(y_hi), sy(y_lo)
    for k, (a, b) in enumerate(truth_ranges):
        w = max(sx(min(b - 1, x_hi)) - sx(a), 1.5)
        canvas.add(
            f'<rect id="gt_{k}" x="{_fmt(sx(a))}" y="{_fmt(top)}" width="{_fmt(w)}" '
            f'height="{_fmt(bottom - top)}" fill="green" fill-opacity="0.25"/>'
        )
    for k, (a, b) in enumerate(detected_ranges):
        w = max(sx(min(b - 1, x_hi)) - sx(a), 1.5)
        canvas.add(
            f'<rect id="det_{k}" x="{_fmt(sx(a))}" y="{_fmt(top)}" width="{_fmt(w)}" '
            f'height="{_fmt((bottom - top) * 0.5)}" fill="red" fill-opacity="0.35"/>'
        )
    canvas.add(_polyline(np.arange(x_from, x_from + n), values, sx, sy, "#1f3b73", "series"))
    _axes(canvas, sx, sy, x_lo, x_hi, y_lo, y_hi)
    canvas.add(
        f'<text x="{WIDTH - 330}" y="16" font-family="monospace" font-size="11">'
        f"ground truth: green | detected: red</text>"
    )
    return canvas.finish()


def loss_curves_svg(iterations, loss_d, loss_g, title: str = "training losses") -> str:
    """L_D and L_G against iteration as two polylines (ids loss_d, loss_g)."""
    iterations = np.asarray(iterations, np.float64)
    ld = np.asarray(loss_d, np.float64)
    lg = np.asarray(loss_g, np.float64)
    x_lo, x_hi = float(iterations.min()), float(iterations.max())
    y_lo = float(min(ld.min(), lg.min()))
    y_hi = float(max(ld.max(), lg.max()))
    if y_lo == y_hi:
        y_lo, y_hi = y_lo - 1.0, y_hi + 1.0
    if x_lo == x_hi:
        x_hi = x_lo + 1.0
    canvas = _Canvas(title)
    sx, sy = _scales(x_lo, x_hi, y_lo, y_hi)
    canvas.add(_polyline(iterations, ld, sx, sy, "#1f77b4", "loss_d"))
    canvas.add(_polyline(iterations, lg, sx, sy, "#ff7f0e", "loss_g"))
    _axes(canvas, sx, sy, x_lo, x_hi, y_lo, y_hi)
    canvas.add(
        f'<text x="{WIDTH - 260}" y="16" font-family="monospace" font-size="11">'
        f"L_D: blue | L_G: orange</text>"
    )
    return canvas.finish()


def ranges_from_mask(mask: np.ndarray) -> list[tuple[int, int]]:
    """Half-open [start, end) runs of True values."""
    out = []
    start = None
    for i, flag in enumerate(mask):
        if flag and start is None:
            start = i
        elif not flag and start is not None:
            out.append((start, i))
            start = None
    if start is not None:
        out.append((start, len(mask)))
    return out
