"""Self-contained SVG emission for run artifacts.

Hand-rolled rather than delegated to a plotting library so that a fixed
input produces byte-identical files: every coordinate is formatted through
one deterministic float formatter and no timestamps or library versions are
embedded.
"""

from __future__ import annotations

import math
from pathlib import Path

from .estimates import FitResult

_W, _H = 640, 480
_MARGIN = 60


def _f(x: float) -> str:
    return format(x, ".6g")


class _LogLogFrame:
    def __init__(self, xs, ys, x_label: str, y_label: str, title: str):
        finite = [(x, y) for x, y in zip(xs, ys) if x > 0 and y > 0 and math.isfinite(x * y)]
        if not finite:
            raise ValueError("nothing positive to plot")
        self.points = finite
        lx = [math.log10(x) for x, _ in finite]
        ly = [math.log10(y) for _, y in finite]
        self.x0, self.x1 = min(lx), max(lx)
        self.y0, self.y1 = min(ly), max(ly)
        if self.x1 - self.x0 < 1e-9:
            self.x0, self.x1 = self.x0 - 0.5, self.x1 + 0.5
        if self.y1 - self.y0 < 1e-9:
            self.y0, self.y1 = self.y0 - 0.5, self.y1 + 0.5
        pad_x = 0.05 * (self.x1 - self.x0)
        pad_y = 0.08 * (self.y1 - self.y0)
        self.x0 -= pad_x
        self.x1 += pad_x
        self.y0 -= pad_y
        self.y1 += pad_y
        self.x_label, self.y_label, self.title = x_label, y_label, title
        self.body: list[str] = []

    def px(self, x: float) -> float:
        lx = math.log10(x)
        return _MARGIN + (lx - self.x0) / (self.x1 - self.x0) * (_W - 2 * _MARGIN)

    def py(self, y: float) -> float:
        ly = math.log10(y)
        return _H - _MARGIN - (ly - self.y0) / (self.y1 - self.y0) * (_H - 2 * _MARGIN)

    def _decades(self, a: float, b: float):
        return range(math.ceil(a), math.floor(b) + 1)

    def frame(self) -> list[str]:
        parts = [
            f'<rect x="{_MARGIN}" y="{_MARGIN}" width="{_W - 2 * _MARGIN}" '
            f'height="{_H - 2 * _MARGIN}" fill="none" stroke="black"/>',
            f'<text x="{_W // 2}" y="24" text-anchor="middle" font-size="15">{self.title}</text>',
            f'<text x="{_W // 2}" y="{_H - 16}" text-anchor="middle" font-size="12">{self.x_label}</text>',
            f'<text x="18" y="{_H // 2}" text-anchor="middle" font-size="12" '
            f'transform="rotate(-90 18 {_H // 2})">{self.y_label}</text>',
        ]
        for dec in self._decades(self.x0, self.x1):
            x = self.px(10.0**dec)
            parts.append(
                f'<line x1="{_f(x)}" y1="{_MARGIN}" x2="{_f(x)}" y2="{_H - _MARGIN}" '
                f'stroke="#cccccc" stroke-width="0.5"/>'
            )
            parts.append(
                f'<text x="{_f(x)}" y="{_H - _MARGIN + 16}" text-anchor="middle" '
                f'font-size="10">1e{dec}</text>'
            )
        for dec in self._decades(self.y0, self.y1):
            y = self.py(10.0**dec)
            parts.append(
                f'<line x1="{_MARGIN}" y1="{_f(y)}" x2="{_W - _MARGIN}" y2="{_f(y)}" '
                f'stroke="#cccccc" stroke-width="0.5"/>'
            )
            parts.append(
                f'<text x="{_MARGIN - 6}" y="{_f(y + 3)}" text-anchor="end" '
                f'font-size="10">1e{dec}</text>'
            )
        return parts

    def markers(self, color: str = "#1f77b4") -> None:
        for x, y in self.points:
            self.body.append(
                f'<circle cx="{_f(self.px(x))}" cy="{_f(self.py(y))}" r="2.5" fill="{color}"/>'
            )

    def polyline(self, pts, color: str, width: float = 1.5, dash: str | None = None) -> None:
        coords = " ".join(f"{_f(self.px(x))},{_f(self.py(y))}" for x, y in pts)
        dash_attr = f' stroke-dasharray="{dash}"' if dash else ""
        self.body.append(
            f'<polyline points="{coords}" fill="none" stroke="{color}" '
            f'stroke-width="{_f(width)}"{dash_attr}/>'
        )

    def label(self, text: str) -> None:
        self.body.append(
            f'<text x="{_W - _MARGIN - 6}" y="{_MARGIN + 18}" text-anchor="end" '
            f'font-size="12" fill="#d62728">{text}</text>'
        )

    def render(self) -> str:
        parts = [
            '<?xml version="1.0" encoding="UTF-8"?>',
            f'<svg xmlns="http://www.w3.org/2000/svg" width="{_W}" height="{_H}" '
            f'viewBox="0 0 {_W} {_H}">',
            '<rect width="100%" height="100%" fill="white"/>',
            *self.frame(),
            *self.body,
            "</svg>",
        ]
        return "\n".join(parts) + "\n"


def decay_plot_svg(
    times, values, fit: FitResult | None, title: str, y_label: str = "L2 norm"
) -> str:
    """Log-log norm-versus-time scatter with the fitted power law overlaid.
    Degenerate inputs (fewer than two points) get markers and no fit line."""
    frame = _LogLogFrame(times, values, "t", y_label, title)
    frame.markers()
    if fit is not None and len(frame.points) >= 2:
        xa = frame.points[0][0]
        xb = frame.points[-1][0]
        ya = math.exp(fit.intercept) * xa**fit.slope
        yb = math.exp(fit.intercept) * xb**fit.slope
        frame.polyline([(xa, ya), (xb, yb)], "#d62728", dash="6,3")
        frame.label(f"slope={fit.slope:.3f}  r2={fit.r_squared:.3f}")
    return frame.render()


def ratio_plot_svg(scales, ratios, title: str, slope: float | None = None) -> str:
    """Log-log ratio-versus-scale scatter, optionally with a slope guide."""
    frame = _LogLogFrame(scales, ratios, "N", "ratio", title)
    frame.markers("#2ca02c")
    if slope is not None and len(frame.points) >= 2:
        xa, ya = frame.points[0]
        xb = frame.points[-1][0]
        yb = ya * (xb / xa) ** slope
        frame.polyline([(xa, ya), (xb, yb)], "#d62728", dash="6,3")
        frame.label(f"guide slope={slope:.3f}")
    return frame.render()


def write_svg(text: str, path: Path) -> None:
    path.write_text(text)
