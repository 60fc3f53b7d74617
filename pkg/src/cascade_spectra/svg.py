"""Tiny SVG line-chart writer: axes, ticks, legend and vertical markers."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from xml.sax.saxutils import escape

PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b")
DASHES = ("", "6,3", "2,2", "8,3,2,3")


@dataclass
class Series:
    label: str
    x: list[float]
    y: list[float]


@dataclass
class Marker:
    x: float
    label: str


@dataclass
class LineChart:
    title: str
    xlabel: str = "q"
    ylabel: str = ""
    series: list[Series] = field(default_factory=list)
    markers: list[Marker] = field(default_factory=list)
    width: int = 640
    height: int = 420

    def add(self, label: str, x, y) -> None:
        self.series.append(Series(label, [float(a) for a in x], [float(b) for b in y]))

    def mark(self, x: float, label: str) -> None:
        self.markers.append(Marker(float(x), label))

    def render(self) -> str:
        left, right, top, bottom = 60, 150, 36, 46
        pw, ph = self.width - left - right, self.height - top - bottom
        pts = [(a, b) for s in self.series for a, b in zip(s.x, s.y)
               if math.isfinite(a) and math.isfinite(b)]
        if not pts:
            pts = [(0.0, 0.0), (1.0, 1.0)]
        x0, x1 = min(p[0] for p in pts), max(p[0] for p in pts)
        y0, y1 = min(p[1] for p in pts), max(p[1] for p in pts)
        if x1 == x0:
            x1 = x0 + 1
        if y1 == y0:
            y1 = y0 + 1
        pad = 0.05 * (y1 - y0)
        y0, y1 = y0 - pad, y1 + pad

        def sx(a):
            return left + (a - x0) / (x1 - x0) * pw

        def sy(b):
            return top + (y1 - b) / (y1 - y0) * ph

        out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{self.width}" '
               f'height="{self.height}" font-family="sans-serif" font-size="11">',
               f'<rect width="{self.width}" height="{self.height}" fill="white"/>',
               f'<text x="{left + pw / 2:.1f}" y="20" text-anchor="middle" '
               f'font-size="13">{escape(self.title)}</text>',
               f'<rect x="{left}" y="{top}" width="{pw}" height="{ph}" fill="none" stroke="black"/>']
        for k in range(6):
            a = x0 + k * (x1 - x0) / 5
            b = y0 + k * (y1 - y0) / 5
            out.append(f'<line x1="{sx(a):.1f}" y1="{top + ph}" x2="{sx(a):.1f}" '
                       f'y2="{top + ph + 4}" stroke="black"/>')
            out.append(f'<text x="{sx(a):.1f}" y="{top + ph + 16}" '
                       f'text-anchor="middle">{a:.3g}</text>')
            out.append(f'<line x1="{left - 4}" y1="{sy(b):.1f}" x2="{left}" '
                       f'y2="{sy(b):.1f}" stroke="black"/>')
            out.append(f'<text x="{left - 6}" y="{sy(b) + 4:.1f}" '
                       f'text-anchor="end">{b:.3g}</text>')
        if y0 < 0 < y1:
            out.append(f'<line x1="{left}" y1="{sy(0):.1f}" x2="{left + pw}" y2="{sy(0):.1f}" '
                       'stroke="#bbb"/>')
        out.append(f'<text x="{left + pw / 2:.1f}" y="{self.height - 8}" '
                   f'text-anchor="middle">{escape(self.xlabel)}</text>')
        out.append(f'<text x="14" y="{top + ph / 2:.1f}" text-anchor="middle" '
                   f'transform="rotate(-90 14 {top + ph / 2:.1f})">{escape(self.ylabel)}</text>')

        for k, s in enumerate(self.series):
            colour, dash = PALETTE[k % len(PALETTE)], DASHES[k % len(DASHES)]
            dash_attr = f' stroke-dasharray="{dash}"' if dash else ""
            # break the polyline at non-finite values
            runs, cur = [], []
            for a, b in zip(s.x, s.y):
                if math.isfinite(a) and math.isfinite(b):
                    cur.append(f"{sx(a):.2f},{sy(b):.2f}")
                elif cur:
                    runs.append(cur)
                    cur = []
            if cur:
                runs.append(cur)
            for run in runs:
                out.append(f'<polyline fill="none" stroke="{colour}" stroke-width="1.6"'
                           f'{dash_attr} points="{" ".join(run)}"/>')
            ly = top + 14 + 18 * k
            out.append(f'<line x1="{left + pw + 10}" y1="{ly}" x2="{left + pw + 34}" y2="{ly}" '
                       f'stroke="{colour}" stroke-width="1.6"{dash_attr}/>')
            out.append(f'<text x="{left + pw + 40}" y="{ly + 4}">{escape(s.label)}</text>')

        for mk in self.markers:
            if not x0 <= mk.x <= x1:
                continue
            out.append(f'<line x1="{sx(mk.x):.1f}" y1="{top}" x2="{sx(mk.x):.1f}" '
                       f'y2="{top + ph}" stroke="#666" stroke-dasharray="3,3"/>')
            out.append(f'<text x="{sx(mk.x) + 3:.1f}" y="{top + 12}" fill="#444">'
                       f'{escape(mk.label)}</text>')
        out.append("</svg>")
        return "\n".join(out) + "\n"

    def save(self, path: Path) -> None:
        Path(path).write_text(self.render())
