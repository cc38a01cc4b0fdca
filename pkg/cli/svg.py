"""Self-contained SVG line charts with a fixed numeric layout."""
from dataclasses import dataclass
from xml.sax.saxutils import escape

import numpy as np

from estimation.exceptions import InputError

WIDTH = 640
HEIGHT = 400
MARGIN_LEFT = 70
MARGIN_RIGHT = 150
MARGIN_TOP = 40
MARGIN_BOTTOM = 50
PALETTE = ('#1f77b4', '#d62728', '#2ca02c', '#ff7f0e', '#9467bd', '#8c564b', '#e377c2', '#7f7f7f', '#17becf')


def _fmt(value):
    return f"{value:.2f}"


@dataclass(frozen=True)
class Frame:
    """Maps data coordinates into the plotting rectangle."""

    x_min: float
    x_max: float
    y_min: float
    y_max: float
    width: int = WIDTH
    height: int = HEIGHT

    @classmethod
    def fit(cls, series):
        xs = np.concatenate([np.asarray(x, dtype=float) for x, _ in series.values()])
        ys = np.concatenate([np.asarray(y, dtype=float) for _, y in series.values()])
        x_min, x_max = float(xs.min()), float(xs.max())
        y_min, y_max = float(ys.min()), float(ys.max())
        if x_max == x_min:
            x_min, x_max = x_min - 0.5, x_max + 0.5
        if y_max == y_min:
            y_min, y_max = y_min - 0.5, y_max + 0.5
        return cls(x_min, x_max, y_min, y_max)

    @property
    def plot_width(self):
        return self.width - MARGIN_LEFT - MARGIN_RIGHT

    @property
    def plot_height(self):
        return self.height - MARGIN_TOP - MARGIN_BOTTOM

    def px(self, x):
        return MARGIN_LEFT + (np.asarray(x, dtype=float) - self.x_min) / (self.x_max - self.x_min) * self.plot_width

    def py(self, y):
        return MARGIN_TOP + (self.y_max - np.asarray(y, dtype=float)) / (self.y_max - self.y_min) * self.plot_height


def _check_series(series):
    if not series:
        raise InputError("a line chart needs at least one series")
    checked = {}
    for name, (x, y) in series.items():
        x = np.asarray(x, dtype=float).ravel()
        y = np.asarray(y, dtype=float).ravel()
        if x.size == 0 or x.size != y.size:
            raise InputError(f"series '{name}' needs equal-length, non-empty x and y (got {x.size} and {y.size})")
        if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
            raise InputError(f"series '{name}' contains non-finite values")
        checked[str(name)] = (x, y)
    return checked


def render_svg_line(series, x_label='', y_label='', title=''):
    """
    Render named (x, y) sequences as one polyline each, with axes, five
    ticks per axis and a legend. Identical input gives identical text.
    """
    series = _check_series(series)
    frame = Frame.fit(series)
    left, top = MARGIN_LEFT, MARGIN_TOP
    right, bottom = left + frame.plot_width, top + frame.plot_height

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{frame.width}" height="{frame.height}" '
        f'viewBox="0 0 {frame.width} {frame.height}" font-family="sans-serif" font-size="11">',
        f'<rect x="0" y="0" width="{frame.width}" height="{frame.height}" fill="white"/>',
    ]
    if title:
        out.append(f'<text x="{_fmt(frame.width / 2)}" y="20" text-anchor="middle" font-size="13">{escape(title)}</text>')
    out.append(f'<line x1="{left}" y1="{bottom}" x2="{right}" y2="{bottom}" stroke="black"/>')
    out.append(f'<line x1="{left}" y1="{top}" x2="{left}" y2="{bottom}" stroke="black"/>')

    for value in np.linspace(frame.x_min, frame.x_max, 5):
        x = _fmt(frame.px(value))
        out.append(f'<line x1="{x}" y1="{bottom}" x2="{x}" y2="{bottom + 4}" stroke="black"/>')
        out.append(f'<text x="{x}" y="{bottom + 16}" text-anchor="middle">{value:.3g}</text>')
    for value in np.linspace(frame.y_min, frame.y_max, 5):
        y = _fmt(frame.py(value))
        out.append(f'<line x1="{left - 4}" y1="{y}" x2="{left}" y2="{y}" stroke="black"/>')
        out.append(f'<text x="{left - 6}" y="{y}" text-anchor="end" dominant-baseline="middle">{value:.3g}</text>')
    if x_label:
        out.append(f'<text x="{_fmt((left + right) / 2)}" y="{frame.height - 10}" text-anchor="middle">{escape(x_label)}</text>')
    if y_label:
        out.append(f'<text x="16" y="{_fmt((top + bottom) / 2)}" text-anchor="middle" '
                   f'transform="rotate(-90 16 {_fmt((top + bottom) / 2)})">{escape(y_label)}</text>')

    for k, (name, (x, y)) in enumerate(series.items()):
        color = PALETTE[k % len(PALETTE)]
        points = ' '.join(f"{_fmt(a)},{_fmt(b)}" for a, b in zip(frame.px(x), frame.py(y)))
        out.append(f'<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{points}"/>')
        ly = top + 14 * k + 6
        out.append(f'<line x1="{right + 12}" y1="{ly}" x2="{right + 32}" y2="{ly}" stroke="{color}" stroke-width="2"/>')
        out.append(f'<text x="{right + 38}" y="{ly}" dominant-baseline="middle">{escape(name)}</text>')

    out.append('</svg>')
    return '\n'.join(out) + '\n'
