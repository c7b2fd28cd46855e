"""Self-contained SVG line charts from experiment CSVs."""

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from xml.sax.saxutils import escape

from ..errors import SchemaMismatch

PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#17becf",
           "#7f7f7f")
WIDTH, HEIGHT = 640, 420
MARGIN = dict(left=70, right=150, top=40, bottom=55)


@dataclass(frozen=True)
class ChartSpec:
    x: str
    y: str
    series: str = "method"
    title: str = ""
    log_x: bool = False
    log_y: bool = False
    db: bool = False          # plot 10*log10(y)
    where: tuple = ()         # (column, value) filters applied before plotting


def read_series(csv_path, spec):
    """``{series label: [(x, y), ...]}`` sorted by x."""
    with open(csv_path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        cols = reader.fieldnames or []
        need = {spec.x, spec.y} | ({spec.series} if spec.series else set())
        need |= {c for c, _ in spec.where}
        missing = sorted(need - set(cols))
        if missing:
            raise SchemaMismatch(f"{csv_path}: missing columns {missing}")
        data = {}
        for row in reader:
            if any(row[c] != str(v) for c, v in spec.where):
                continue
            try:
                x, y = float(row[spec.x]), float(row[spec.y])
            except ValueError as exc:
                raise SchemaMismatch(f"{csv_path}: non-numeric value ({exc})") from None
            if spec.db:
                if y <= 0:
                    raise SchemaMismatch(f"{csv_path}: dB scale needs positive {spec.y}")
                y = 10.0 * math.log10(y)
            label = row[spec.series] if spec.series else spec.y
            data.setdefault(label, []).append((x, y))
    pts = [p for s in data.values() for p in s if math.isfinite(p[0]) and math.isfinite(p[1])]
    if not pts:
        raise SchemaMismatch(f"{csv_path}: no data rows to plot")
    return {k: sorted(v) for k, v in data.items()}


def _ticks(lo, hi, n=5):
    if hi <= lo:
        return [lo]
    raw = (hi - lo) / n
    mag = 10 ** math.floor(math.log10(raw))
    step = min((m * mag for m in (1, 2, 2.5, 5, 10) if m * mag >= raw), default=raw)
    start = math.ceil(lo / step) * step
    out = []
    v = start
    while v <= hi + 1e-9 * step:
        out.append(round(v, 12))
        v += step
    return out


def _axis(values, log):
    if log:
        if min(values) <= 0:
            raise SchemaMismatch("log axis needs positive values")
        values = [math.log10(v) for v in values]
    lo, hi = min(values), max(values)
    if hi == lo:
        lo, hi = lo - 0.5, hi + 0.5
    pad = 0.05 * (hi - lo)
    return lo - pad, hi + pad


def render_svg(series, spec):
    xs = [x for s in series.values() for x, _ in s]
    ys = [y for s in series.values() for _, y in s]
    x0, x1 = _axis(xs, spec.log_x)
    y0, y1 = _axis(ys, spec.log_y)
    pw = WIDTH - MARGIN["left"] - MARGIN["right"]
    ph = HEIGHT - MARGIN["top"] - MARGIN["bottom"]

    def sx(v):
        v = math.log10(v) if spec.log_x else v
        return MARGIN["left"] + (v - x0) / (x1 - x0) * pw

    def sy(v):
        v = math.log10(v) if spec.log_y else v
        return MARGIN["top"] + (1.0 - (v - y0) / (y1 - y0)) * ph

    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
           f'viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">',
           f'<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>',
           f'<rect x="{MARGIN["left"]}" y="{MARGIN["top"]}" width="{pw}" height="{ph}" '
           'fill="none" stroke="black"/>']
    for axis, lo, hi, log in (("x", x0, x1, spec.log_x), ("y", y0, y1, spec.log_y)):
        for t in _ticks(lo, hi):
            val = 10 ** t if log else t
            label = f"{val:g}"
            if axis == "x":
                px = sx(val)
                out.append(f'<line x1="{px:.2f}" y1="{MARGIN["top"] + ph}" x2="{px:.2f}" '
                           f'y2="{MARGIN["top"] + ph + 5}" stroke="black"/>')
                out.append(f'<text x="{px:.2f}" y="{MARGIN["top"] + ph + 18}" '
                           f'text-anchor="middle">{label}</text>')
            else:
                py = sy(val)
                out.append(f'<line x1="{MARGIN["left"] - 5}" y1="{py:.2f}" '
                           f'x2="{MARGIN["left"]}" y2="{py:.2f}" stroke="black"/>')
                out.append(f'<text x="{MARGIN["left"] - 8}" y="{py + 4:.2f}" '
                           f'text-anchor="end">{label}</text>')
    ylabel = f"{spec.y} (dB)" if spec.db else spec.y
    out.append(f'<text x="{MARGIN["left"] + pw / 2}" y="{HEIGHT - 12}" '
               f'text-anchor="middle">{escape(spec.x)}</text>')
    out.append(f'<text x="16" y="{MARGIN["top"] + ph / 2}" text-anchor="middle" '
               f'transform="rotate(-90 16 {MARGIN["top"] + ph / 2})">{escape(ylabel)}</text>')
    if spec.title:
        out.append(f'<text x="{WIDTH / 2}" y="22" text-anchor="middle" '
                   f'font-size="14">{escape(spec.title)}</text>')
    for i, (label, pts) in enumerate(series.items()):
        color = PALETTE[i % len(PALETTE)]
        pts = [(x, y) for x, y in pts if math.isfinite(x) and math.isfinite(y)]
        coords = " ".join(f"{sx(x):.2f},{sy(y):.2f}" for x, y in pts)
        out.append(f'<polyline fill="none" stroke="{color}" stroke-width="1.5" '
                   f'points="{coords}"/>')
        for x, y in pts:
            out.append(f'<circle cx="{sx(x):.2f}" cy="{sy(y):.2f}" r="2.5" fill="{color}"/>')
        ly = MARGIN["top"] + 14 + 18 * i
        lx = WIDTH - MARGIN["right"] + 12
        out.append(f'<line x1="{lx}" y1="{ly}" x2="{lx + 20}" y2="{ly}" stroke="{color}" '
                   'stroke-width="2"/>')
        out.append(f'<text x="{lx + 26}" y="{ly + 4}">{escape(label)}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def emit_chart(csv_path, spec, svg_path=None):
    """Render ``csv_path`` to an SVG next to it (or at ``svg_path``)."""
    series = read_series(csv_path, spec)
    svg_path = Path(svg_path) if svg_path else Path(csv_path).with_suffix(".svg")
    svg_path.write_text(render_svg(series, spec), encoding="utf-8")
    return svg_path
