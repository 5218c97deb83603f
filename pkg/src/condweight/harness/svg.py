"""Minimal SVG plotting: scatter, line-and-points, histogram."""

from __future__ import annotations

import math

W, H = 480, 360
M = 48


def _fmt(v: float) -> str:
    return f"{v:.2f}"


def _ticks(lo, hi, k=5):
    if not math.isfinite(lo) or not math.isfinite(hi) or hi <= lo:
        return [lo]
    step = 10 ** math.floor(math.log10((hi - lo) / k))
    for m in (1, 2, 5, 10):
        if (hi - lo) / (m * step) <= k:
            step *= m
            break
    t = math.ceil(lo / step) * step
    out = []
    while t <= hi + 1e-12 * abs(hi):
        out.append(t)
        t += step
    return out


class Canvas:
    def __init__(self, xlim, ylim, title="", xlabel="", ylabel=""):
        x0, x1 = xlim
        y0, y1 = ylim
        if x1 <= x0:
            x0, x1 = x0 - 1, x1 + 1
        if y1 <= y0:
            y0, y1 = y0 - 1, y1 + 1
        self.xlim, self.ylim = (x0, x1), (y0, y1)
        self.parts = [
            f'<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}">',
            f'<rect width="{W}" height="{H}" fill="white"/>',
            f'<text x="{W / 2}" y="20" text-anchor="middle" font-size="14">{_esc(title)}</text>',
            f'<text x="{W / 2}" y="{H - 8}" text-anchor="middle" font-size="12">{_esc(xlabel)}</text>',
            f'<text x="14" y="{H / 2}" text-anchor="middle" font-size="12" '
            f'transform="rotate(-90 14 {H / 2})">{_esc(ylabel)}</text>',
            f'<rect x="{M}" y="{M // 2}" width="{W - 1.5 * M}" height="{H - 1.5 * M - M // 2}" '
            'fill="none" stroke="black"/>',
        ]
        for t in _ticks(*self.xlim):
            px = self.px(t)
            self.parts.append(f'<text x="{_fmt(px)}" y="{H - M + 14}" text-anchor="middle" font-size="10">{t:g}</text>')
        for t in _ticks(*self.ylim):
            py = self.py(t)
            self.parts.append(f'<text x="{M - 4}" y="{_fmt(py + 3)}" text-anchor="end" font-size="10">{t:g}</text>')

    def px(self, x):
        x0, x1 = self.xlim
        return M + (x - x0) / (x1 - x0) * (W - 1.5 * M)

    def py(self, y):
        y0, y1 = self.ylim
        return H - M - (y - y0) / (y1 - y0) * (H - 1.5 * M - M // 2)

    def points(self, xs, ys, colors=None, r=2.0):
        for i, (x, y) in enumerate(zip(xs, ys)):
            c = colors[i] if colors is not None else "black"
            self.parts.append(f'<circle cx="{_fmt(self.px(x))}" cy="{_fmt(self.py(y))}" r="{r}" fill="{c}"/>')

    def line(self, xs, ys, color="gray", dash=False):
        pts = " ".join(f"{_fmt(self.px(x))},{_fmt(self.py(y))}" for x, y in zip(xs, ys))
        extra = ' stroke-dasharray="4 3"' if dash else ""
        self.parts.append(f'<polyline points="{pts}" fill="none" stroke="{color}"{extra}/>')

    def bars(self, edges, counts, color="steelblue"):
        for a, b, c in zip(edges[:-1], edges[1:], counts):
            x, w = self.px(a), self.px(b) - self.px(a)
            y = self.py(c)
            self.parts.append(
                f'<rect x="{_fmt(x)}" y="{_fmt(y)}" width="{_fmt(w)}" height="{_fmt(self.py(self.ylim[0]) - y)}" '
                f'fill="{color}" stroke="white" stroke-width="0.5"/>'
            )

    def vline(self, x, color="red"):
        self.line([x, x], list(self.ylim), color=color, dash=True)

    def render(self) -> str:
        return "\n".join(self.parts + ["</svg>"]) + "\n"


def _esc(s: str) -> str:
    return s.replace("&", "&amp;").replace("<", "&lt;").replace(">", "&gt;")


def _lim(vals, pad=0.05):
    lo, hi = min(vals), max(vals)
    d = (hi - lo) * pad or 1.0
    return lo - d, hi + d
