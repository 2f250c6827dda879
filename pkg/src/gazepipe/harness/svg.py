"""Minimal SVG charts: bars with error bars, binned curves with a fitted line, heat grids.

Presentational only; the CSV files are the machine-readable output.
"""
from __future__ import annotations

from xml.sax.saxutils import escape

import numpy as np

W, H = 640, 400
LEFT, RIGHT, TOP, BOTTOM = 60, 20, 30, 50


def _fmt(v: float) -> str:
    return f"{v:.2f}"


def _doc(body: list[str], title: str) -> str:
    head = (
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" '
        f'viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="11">'
    )
    t = f'<text x="{W / 2}" y="18" text-anchor="middle" font-size="13">{escape(title)}</text>'
    return "\n".join([head, '<rect width="100%" height="100%" fill="white"/>', t, *body, "</svg>"]) + "\n"


class _Axes:
    def __init__(self, x0, x1, y0, y1):
        self.x0, self.x1 = x0, x1 if x1 > x0 else x0 + 1.0
        self.y0, self.y1 = y0, y1 if y1 > y0 else y0 + 1.0

    def px(self, x):
        return LEFT + (x - self.x0) / (self.x1 - self.x0) * (W - LEFT - RIGHT)

    def py(self, y):
        return H - BOTTOM - (y - self.y0) / (self.y1 - self.y0) * (H - TOP - BOTTOM)

    def frame(self, xlabel: str, ylabel: str, yticks: int = 5) -> list[str]:
        out = [
            f'<line x1="{LEFT}" y1="{H - BOTTOM}" x2="{W - RIGHT}" y2="{H - BOTTOM}" stroke="black"/>',
            f'<line x1="{LEFT}" y1="{TOP}" x2="{LEFT}" y2="{H - BOTTOM}" stroke="black"/>',
            f'<text x="{(LEFT + W - RIGHT) / 2}" y="{H - 10}" text-anchor="middle">{escape(xlabel)}</text>',
            f'<text x="14" y="{(TOP + H - BOTTOM) / 2}" text-anchor="middle" '
            f'transform="rotate(-90 14 {(TOP + H - BOTTOM) / 2})">{escape(ylabel)}</text>',
        ]  # fmt: skip
        for v in np.linspace(self.y0, self.y1, yticks + 1):
            y = self.py(v)
            out.append(f'<text x="{LEFT - 6}" y="{_fmt(y + 4)}" text-anchor="end">{v:.1f}</text>')
            out.append(f'<line x1="{LEFT - 3}" y1="{_fmt(y)}" x2="{LEFT}" y2="{_fmt(y)}" stroke="black"/>')
        return out


def bar_chart(labels, values, errors=None, title="", ylabel="") -> str:
    values = np.asarray(values, float)
    errors = np.zeros_like(values) if errors is None else np.asarray(errors, float)
    top = float(np.nanmax(values + errors)) if len(values) else 1.0
    ax = _Axes(0, max(len(values), 1), 0, top * 1.1 if top > 0 else 1.0)
    body = ax.frame("", ylabel)
    for i, (lab, v, e) in enumerate(zip(labels, values, errors)):
        x0, x1 = ax.px(i + 0.15), ax.px(i + 0.85)
        xc = 0.5 * (x0 + x1)
        body.append(f'<rect x="{_fmt(x0)}" y="{_fmt(ax.py(v))}" width="{_fmt(x1 - x0)}" '
                    f'height="{_fmt(ax.py(0) - ax.py(v))}" fill="#4a7ab5"/>')  # fmt: skip
        if e > 0:
            body.append(f'<line x1="{_fmt(xc)}" y1="{_fmt(ax.py(v - e))}" x2="{_fmt(xc)}" '
                        f'y2="{_fmt(ax.py(v + e))}" stroke="black"/>')  # fmt: skip
        body.append(f'<text x="{_fmt(xc)}" y="{H - BOTTOM + 14}" text-anchor="middle">{escape(str(lab))}</text>')
    return _doc(body, title)


def binned_curve(centres, means, coeffs=None, title="", xlabel="", ylabel="") -> str:
    centres, means = np.asarray(centres, float), np.asarray(means, float)
    ok = ~np.isnan(means)
    xs = np.linspace(centres.min(), centres.max(), 50)
    fit = np.polyval(coeffs, xs) if coeffs is not None else np.array([])
    ys = np.concatenate([means[ok], fit])
    ax = _Axes(float(centres.min()), float(centres.max()), 0.0, float(ys.max()) * 1.1 if len(ys) else 1.0)
    body = ax.frame(xlabel, ylabel)
    for x in centres:
        body.append(f'<text x="{_fmt(ax.px(x))}" y="{H - BOTTOM + 14}" text-anchor="middle">{x:.1f}</text>')
    for x, y in zip(centres[ok], means[ok]):
        body.append(f'<circle cx="{_fmt(ax.px(x))}" cy="{_fmt(ax.py(y))}" r="3.5" fill="#4a7ab5"/>')
    if len(fit):
        pts = " ".join(f"{_fmt(ax.px(x))},{_fmt(ax.py(y))}" for x, y in zip(xs, fit))
        body.append(f'<polyline points="{pts}" fill="none" stroke="#c0392b"/>')
    return _doc(body, title)


def heat_grid(row_labels, col_labels, values, title="", row_title="", col_title="") -> str:
    values = np.asarray(values, float)
    n_r, n_c = values.shape
    lo, hi = float(np.min(values)), float(np.max(values))
    cw = (W - LEFT - RIGHT) / n_c
    ch = (H - TOP - BOTTOM) / n_r
    body = []
    for i in range(n_r):
        for j in range(n_c):
            t = 0.0 if hi == lo else (values[i, j] - lo) / (hi - lo)
            shade = int(round(255 - 175 * t))
            x, y = LEFT + j * cw, TOP + i * ch
            body.append(f'<rect x="{_fmt(x)}" y="{_fmt(y)}" width="{_fmt(cw)}" height="{_fmt(ch)}" '
                        f'fill="rgb(255,{shade},{shade})" stroke="white"/>')  # fmt: skip
            body.append(f'<text x="{_fmt(x + cw / 2)}" y="{_fmt(y + ch / 2 + 4)}" '
                        f'text-anchor="middle">{values[i, j]:.2f}</text>')  # fmt: skip
        body.append(f'<text x="{LEFT - 6}" y="{_fmt(TOP + (i + 0.5) * ch + 4)}" '
                    f'text-anchor="end">{escape(str(row_labels[i]))}</text>')  # fmt: skip
    for j in range(n_c):
        body.append(f'<text x="{_fmt(LEFT + (j + 0.5) * cw)}" y="{H - BOTTOM + 14}" '
                    f'text-anchor="middle">{escape(str(col_labels[j]))}</text>')  # fmt: skip
    body.append(f'<text x="{(LEFT + W - RIGHT) / 2}" y="{H - 10}" text-anchor="middle">{escape(col_title)}</text>')
    body.append(f'<text x="14" y="{(TOP + H - BOTTOM) / 2}" text-anchor="middle" '
                f'transform="rotate(-90 14 {(TOP + H - BOTTOM) / 2})">{escape(row_title)}</text>')  # fmt: skip
    return _doc(body, title)
