"""Self-contained SVG rendering of forecast fan charts and sample histograms."""
from __future__ import annotations

import csv
import io
import math
from html import escape

from .errors import ValidationError

WIDTH, HEIGHT = 800, 420
MARGIN = dict(left=60, right=150, top=30, bottom=40)
FORECAST_COLUMNS = ("window", "step", "timestamp", "true", "point", "q0.1", "q0.9")
BASELINE_COLORS = {"lstm": "#1f4fd1", "seasonal_naive": "#d12a1f"}
MODEL_COLORS = ("#6b8e23", "#8a2be2", "#ff8c00", "#008b8b", "#b8860b", "#708090")
BAND_COLOR = "#6b8e23"


def _read_csv(text: str, required, kind: str) -> tuple[list, list]:
    reader = csv.reader(io.StringIO(text))
    try:
        header = next(reader)
    except StopIteration:
        raise ValidationError(f"{kind} CSV is empty") from None
    missing = [c for c in required if c not in header]
    if missing:
        raise ValidationError(f"{kind} CSV is missing columns: {', '.join(missing)}")
    rows = [r for r in reader if r]
    if not rows:
        raise ValidationError(f"{kind} CSV has no data rows")
    return header, rows


def _num(cell: str):
    return float(cell) if cell.strip() else None


def _nice_ticks(lo: float, hi: float, count: int = 5) -> list[float]:
    if hi <= lo:
        hi = lo + 1.0
    raw = (hi - lo) / count
    mag = 10 ** math.floor(math.log10(raw))
    step = min((m * mag for m in (1, 2, 5, 10) if m * mag >= raw), default=10 * mag)
    start = math.ceil(lo / step) * step
    ticks = []
    v = start
    while v <= hi + 1e-9 * step:
        ticks.append(round(v, 10))
        v += step
    return ticks


class _Frame:
    def __init__(self, x_lo, x_hi, y_lo, y_hi):
        if x_hi <= x_lo:
            x_hi = x_lo + 1.0
        if y_hi <= y_lo:
            y_lo, y_hi = y_lo - 0.5, y_hi + 0.5
        pad = 0.05 * (y_hi - y_lo)
        self.x_lo, self.x_hi, self.y_lo, self.y_hi = x_lo, x_hi, y_lo - pad, y_hi + pad
        self.w = WIDTH - MARGIN["left"] - MARGIN["right"]
        self.h = HEIGHT - MARGIN["top"] - MARGIN["bottom"]

    def x(self, v: float) -> float:
        return MARGIN["left"] + (v - self.x_lo) / (self.x_hi - self.x_lo) * self.w

    def y(self, v: float) -> float:
        return MARGIN["top"] + (1.0 - (v - self.y_lo) / (self.y_hi - self.y_lo)) * self.h

    def axes(self, x_label: str, y_label: str) -> list[str]:
        x0, y0 = MARGIN["left"], MARGIN["top"] + self.h
        out = [f'<g class="axes" stroke="#333" stroke-width="1">',
               f'<line x1="{x0}" y1="{MARGIN["top"]}" x2="{x0}" y2="{y0}"/>',
               f'<line x1="{x0}" y1="{y0}" x2="{x0 + self.w}" y2="{y0}"/>', "</g>",
               '<g class="ticks" font-family="sans-serif" font-size="11" fill="#333">']
        for t in _nice_ticks(self.y_lo, self.y_hi):
            out.append(f'<text x="{x0 - 6}" y="{self.y(t) + 4:.2f}" text-anchor="end">{t:g}</text>')
        for t in _nice_ticks(self.x_lo, self.x_hi):
            out.append(f'<text x="{self.x(t):.2f}" y="{y0 + 16}" text-anchor="middle">{t:g}</text>')
        out.append("</g>")
        out.append(f'<text x="{x0 + self.w / 2:.2f}" y="{HEIGHT - 6}" text-anchor="middle" '
                   f'font-family="sans-serif" font-size="12">{escape(x_label)}</text>')
        out.append(f'<text x="14" y="{MARGIN["top"] + self.h / 2:.2f}" text-anchor="middle" '
                   f'font-family="sans-serif" font-size="12" transform="rotate(-90 14 '
                   f'{MARGIN["top"] + self.h / 2:.2f})">{escape(y_label)}</text>')
        return out


def _svg(title: str, body: list[str]) -> str:
    head = (f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
            f'viewBox="0 0 {WIDTH} {HEIGHT}">')
    return "\n".join([head, f"<title>{escape(title)}</title>",
                      f'<rect class="background" x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="white"/>',
                      f'<text x="{WIDTH / 2}" y="18" text-anchor="middle" font-family="sans-serif" '
                      f'font-size="14">{escape(title)}</text>'] + body + ["</svg>"]) + "\n"


def _legend(entries: list[tuple[str, str]]) -> list[str]:
    x = WIDTH - MARGIN["right"] + 12
    out = ['<g class="legend" font-family="sans-serif" font-size="11">']
    for i, (label, color) in enumerate(entries):
        y = MARGIN["top"] + 14 + 16 * i
        out.append(f'<rect x="{x}" y="{y - 9}" width="12" height="10" fill="{color}"/>')
        out.append(f'<text x="{x + 18}" y="{y}">{escape(label)}</text>')
    out.append("</g>")
    return out


def _points(xs, ys, frame: _Frame) -> str:
    return " ".join(f"{frame.x(x):.2f},{frame.y(y):.2f}" for x, y in zip(xs, ys))


def render_forecast_svg(csv_text: str, title: str = "Forecast") -> str:
    """True values, point baselines and the model's median with its 0.1-0.9 band."""
    header, rows = _read_csv(csv_text, FORECAST_COLUMNS, "forecast")
    col = {name: i for i, name in enumerate(header)}
    xs = list(range(len(rows)))
    true = [_num(r[col["true"]]) for r in rows]
    point = [_num(r[col["point"]]) for r in rows]
    lo = [_num(r[col["q0.1"]]) for r in rows]
    hi = [_num(r[col["q0.9"]]) for r in rows]
    has_band = all(v is not None for v in lo + hi)
    baselines = [c for c in header if c.startswith("baseline:")]
    series_vals = true + point + [_num(r[col[b]]) for r in rows for b in baselines]
    if has_band:
        series_vals += lo + hi
    finite = [v for v in series_vals if v is not None]
    frame = _Frame(0, max(len(rows) - 1, 1), min(finite), max(finite))
    body = frame.axes("forecast step", "PRBs in use")
    legend = []
    if has_band:
        poly = _points(xs, hi, frame) + " " + _points(xs[::-1], lo[::-1], frame)
        body.append(f'<polygon class="band" points="{poly}" fill="{BAND_COLOR}" fill-opacity="0.25" stroke="none"/>')
        legend.append(("0.1-0.9 quantile band", BAND_COLOR))
    body.append(f'<polyline class="line true" points="{_points(xs, true, frame)}" fill="none" '
                f'stroke="black" stroke-width="1.5"/>')
    legend.append(("true", "black"))
    for i, b in enumerate(baselines):
        name = b.split(":", 1)[1]
        color = BASELINE_COLORS.get(name, MODEL_COLORS[(i + 1) % len(MODEL_COLORS)])
        vals = [_num(r[col[b]]) for r in rows]
        body.append(f'<polyline class="line baseline" points="{_points(xs, vals, frame)}" fill="none" '
                    f'stroke="{color}" stroke-width="1.2"/>')
        legend.append((name, color))
    body.append(f'<polyline class="line model" points="{_points(xs, point, frame)}" fill="none" '
                f'stroke="{BAND_COLOR}" stroke-width="1.8"/>')
    legend.append(("median / point", BAND_COLOR))
    return _svg(title, body + _legend(legend))


def render_histogram_svg(csv_text: str, title: str = "Histogram of true value and estimators") -> str:
    """One stacked bar per bin (a segment per model) plus vertical marker lines."""
    header, rows = _read_csv(csv_text, ("bin_left", "bin_right"), "histogram")
    col = {name: i for i, name in enumerate(header)}
    models = [c for c in header[2:] if not c.startswith("marker:")]
    markers = [c for c in header if c.startswith("marker:")]
    if not models:
        raise ValidationError("histogram CSV is missing columns: at least one model count column")
    lefts = [float(r[col["bin_left"]]) for r in rows]
    rights = [float(r[col["bin_right"]]) for r in rows]
    counts = [[int(r[col[m]]) for m in models] for r in rows]
    frame = _Frame(lefts[0], rights[-1], 0.0, max(max(sum(c) for c in counts), 1))
    frame.y_lo = 0.0
    body = frame.axes("PRBs in use", "count")
    colors = {m: MODEL_COLORS[i % len(MODEL_COLORS)] for i, m in enumerate(models)}
    for left, right, cs in zip(lefts, rights, counts):
        x0, x1 = frame.x(left), frame.x(right)
        body.append(f'<g class="bar" data-left="{left!r}">')
        base = 0
        for m, c in zip(models, cs):
            if c:
                body.append(f'<rect x="{x0:.2f}" y="{frame.y(base + c):.2f}" width="{max(x1 - x0 - 1, 0.5):.2f}" '
                            f'height="{frame.y(base) - frame.y(base + c):.2f}" fill="{colors[m]}"/>')
            base += c
        body.append("</g>")
    legend = [(m, colors[m]) for m in models]
    for i, mk in enumerate(markers):
        label = mk.split(":", 1)[1]
        v = float(rows[0][col[mk]])
        color = "black" if label == "true" else BASELINE_COLORS.get(label, "#555")
        body.append(f'<line class="marker" x1="{frame.x(v):.2f}" y1="{MARGIN["top"]}" x2="{frame.x(v):.2f}" '
                    f'y2="{frame.y(0):.2f}" stroke="{color}" stroke-width="2" stroke-dasharray="4 2"/>')
        legend.append((label, color))
    return _svg(title, body + _legend(legend))
