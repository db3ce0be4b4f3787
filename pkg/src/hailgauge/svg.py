"""Minimal deterministic SVG chart primitives.

Charts are emitted by string assembly with fixed coordinate formatting so the
same data always produces byte-identical files; no plotting dependency, no
timestamps, fonts referenced by family only.
"""

from __future__ import annotations

import math
from typing import List, Optional, Sequence, Tuple

FONT = "Helvetica, Arial, sans-serif"

PALETTE = {
    "close_up": "#4878a8",
    "distant": "#d8854f",
    "unannotated": "#9aa0a6",
    "bar": "#4878a8",
    "point": "#4878a8",
    "miss": "#c03028",
}


def fmt(value: float) -> str:
    text = f"{value:.2f}"
    return "0.00" if text == "-0.00" else text


def esc(text: str) -> str:
    return (
        text.replace("&", "&amp;").replace("<", "&lt;").replace(">", "&gt;")
        .replace('"', "&quot;")
    )


def nice_ceiling(value: float) -> float:
    """Smallest 1/2/2.5/5 x 10^k at or above value; keeps axes stable."""
    if value <= 0:
        return 1.0
    exponent = math.floor(math.log10(value))
    for mantissa in (1.0, 2.0, 2.5, 5.0, 10.0):
        candidate = mantissa * 10.0**exponent
        if candidate >= value - 1e-12:
            return candidate
    return 10.0 ** (exponent + 1)


class Canvas:
    def __init__(self, width: int, height: int) -> None:
        self.width = width
        self.height = height
        self._parts: List[str] = []

    def rect(self, x: float, y: float, w: float, h: float, fill: str, *, stroke: str = "none") -> None:
        self._parts.append(
            f'<rect x="{fmt(x)}" y="{fmt(y)}" width="{fmt(w)}" height="{fmt(h)}" '
            f'fill="{fill}" stroke="{stroke}"/>'
        )

    def line(
        self, x1: float, y1: float, x2: float, y2: float, stroke: str = "#333333",
        *, width: float = 1.0, dashed: bool = False,
    ) -> None:
        dash = ' stroke-dasharray="6,4"' if dashed else ""
        self._parts.append(
            f'<line x1="{fmt(x1)}" y1="{fmt(y1)}" x2="{fmt(x2)}" y2="{fmt(y2)}" '
            f'stroke="{stroke}" stroke-width="{fmt(width)}"{dash}/>'
        )

    def circle(self, cx: float, cy: float, r: float, fill: str) -> None:
        self._parts.append(
            f'<circle cx="{fmt(cx)}" cy="{fmt(cy)}" r="{fmt(r)}" fill="{fill}" fill-opacity="0.75"/>'
        )

    def cross(self, cx: float, cy: float, r: float, stroke: str) -> None:
        self.line(cx - r, cy - r, cx + r, cy + r, stroke, width=1.5)
        self.line(cx - r, cy + r, cx + r, cy - r, stroke, width=1.5)

    def text(
        self, x: float, y: float, content: str, *, size: int = 11,
        anchor: str = "start", fill: str = "#222222", rotate: Optional[float] = None,
    ) -> None:
        transform = (
            f' transform="rotate({fmt(rotate)} {fmt(x)} {fmt(y)})"' if rotate is not None else ""
        )
        self._parts.append(
            f'<text x="{fmt(x)}" y="{fmt(y)}" font-size="{size}" text-anchor="{anchor}" '
            f'fill="{fill}"{transform}>{esc(content)}</text>'
        )

    def render(self) -> str:
        head = (
            '<?xml version="1.0" encoding="UTF-8"?>\n'
            f'<svg xmlns="http://www.w3.org/2000/svg" viewBox="0 0 {self.width} {self.height}" '
            f'width="{self.width}" height="{self.height}" font-family="{FONT}">\n'
            f'<rect x="0" y="0" width="{self.width}" height="{self.height}" fill="#ffffff"/>\n'
        )
        return head + "\n".join(self._parts) + "\n</svg>\n"


class Frame:
    """Plot area with linear scales and labelled axes."""

    def __init__(
        self, canvas: Canvas, *, left: float = 64, right: float = 20,
        top: float = 52, bottom: float = 64,
        x_max: float = 1.0, y_max: float = 1.0,
    ) -> None:
        self.canvas = canvas
        self.x0 = left
        self.y0 = canvas.height - bottom
        self.x1 = canvas.width - right
        self.y1 = top
        self.x_max = x_max
        self.y_max = y_max

    def x(self, value: float) -> float:
        return self.x0 + (value / self.x_max) * (self.x1 - self.x0)

    def y(self, value: float) -> float:
        return self.y0 - (value / self.y_max) * (self.y0 - self.y1)

    def axes(self) -> None:
        self.canvas.line(self.x0, self.y0, self.x1, self.y0)
        self.canvas.line(self.x0, self.y0, self.x0, self.y1)

    def y_ticks(self, count: int = 5) -> None:
        for i in range(count + 1):
            value = self.y_max * i / count
            y = self.y(value)
            self.canvas.line(self.x0 - 4, y, self.x0, y)
            label = fmt(value).rstrip("0").rstrip(".") or "0"
            self.canvas.text(self.x0 - 8, y + 4, label, anchor="end", size=10)

    def x_ticks(self, values: Sequence[float], labels: Sequence[str]) -> None:
        for value, label in zip(values, labels):
            x = self.x(value)
            self.canvas.line(x, self.y0, x, self.y0 + 4)
            self.canvas.text(x, self.y0 + 16, label, anchor="middle", size=10)


def chart_header(canvas: Canvas, title: str, subtitle: str) -> None:
    canvas.text(16, 22, title, size=14)
    canvas.text(16, 38, subtitle, size=10, fill="#666666")


def legend(canvas: Canvas, entries: List[Tuple[str, str]], x: float, y: float) -> None:
    for i, (label, color) in enumerate(entries):
        yy = y + i * 16
        canvas.rect(x, yy - 9, 11, 11, color)
        canvas.text(x + 16, yy, label, size=10)
