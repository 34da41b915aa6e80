"""Line charts of a results CSV, written as plain SVG.

Iterative methods become polylines of the trial mean against the round;
one-shot methods become horizontal rules at their trial mean. Output is a
pure function of the CSV text.
"""
from __future__ import annotations

import csv
import math
from pathlib import Path
from xml.sax.saxutils import escape

from ..errors import DataError, ParseError
from .runner import BASELINE_ROUND, HEADER

PLOTTED = ("l2_error", "l1_error", "objective", "metric")
WIDTH, HEIGHT = 640, 400
LEFT, RIGHT, TOP, BOTTOM = 70, 150, 40, 50
PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#17becf")


def read_rows(csv_path):
    """Parse a results CSV into dicts with typed fields."""
    path = Path(csv_path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from None
    reader = csv.reader(text.splitlines())
    header = next(reader, None)
    if header is None or tuple(header) != HEADER:
        raise ParseError(f"{path}: header does not match the results schema", line=1)
    rows = []
    for lineno, cells in enumerate(reader, start=2):
        if len(cells) != len(HEADER):
            raise ParseError(f"{path}: expected {len(HEADER)} fields, got {len(cells)}",
                             line=lineno)
        try:
            row = {"method": cells[0], "trial": int(cells[1]), "round": int(cells[2])}
            for name, cell in zip(HEADER[3:], cells[3:]):
                row[name] = float(cell)
        except ValueError as exc:
            raise ParseError(f"{path}: {exc}", line=lineno) from None
        if not row["method"]:
            raise ParseError(f"{path}: empty method name", line=lineno)
        rows.append(row)
    return rows


def _mean(values):
    vals = [v for v in values if not math.isnan(v)]
    return sum(vals) / len(vals) if vals else math.nan


def series(rows, column):
    """({method: [(round, mean)]}, {method: mean}) for iterative and one-shot methods."""
    iterative, baseline = {}, {}
    for r in rows:
        key = r["method"]
        if r["round"] == BASELINE_ROUND:
            baseline.setdefault(key, []).append(r[column])
        else:
            iterative.setdefault(key, {}).setdefault(r["round"], []).append(r[column])
    lines = {}
    for method, by_round in iterative.items():
        pts = [(t, _mean(v)) for t, v in sorted(by_round.items())]
        pts = [(t, y) for t, y in pts if not math.isnan(y)]
        if pts:
            lines[method] = pts
    rules = {}
    for method, vals in baseline.items():
        if method in iterative:
            continue
        y = _mean(vals)
        if not math.isnan(y):
            rules[method] = y
    return lines, rules


def _num(x):
    return f"{x:.2f}"


def _label(y):
    return f"{y:.4g}"


def render_svg(title, column, lines, rules):
    values = [y for pts in lines.values() for _, y in pts] + list(rules.values())
    lo, hi = min(values), max(values)
    if hi == lo:
        lo, hi = lo - 1.0, hi + 1.0
    pad = 0.05 * (hi - lo)
    lo, hi = lo - pad, hi + pad
    max_round = max([t for pts in lines.values() for t, _ in pts] + [1])
    plot_w = WIDTH - LEFT - RIGHT
    plot_h = HEIGHT - TOP - BOTTOM

    def sx(t):
        return LEFT + plot_w * t / max_round

    def sy(y):
        return TOP + plot_h * (hi - y) / (hi - lo)

    names = sorted(set(lines) | set(rules))
    color = {name: PALETTE[i % len(PALETTE)] for i, name in enumerate(names)}
    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
        f'viewBox="0 0 {WIDTH} {HEIGHT}">',
        f'<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="white"/>',
        f'<text x="{WIDTH / 2:.0f}" y="22" text-anchor="middle" font-size="14">'
        f'{escape(title)}: {escape(column)}</text>',
        f'<path class="axis" d="M{LEFT} {TOP}V{TOP + plot_h}H{LEFT + plot_w}" '
        f'stroke="black" fill="none"/>',
    ]
    for k in range(5):
        y = lo + (hi - lo) * k / 4
        out.append(f'<text x="{LEFT - 6}" y="{_num(sy(y) + 4)}" text-anchor="end" '
                   f'font-size="10">{_label(y)}</text>')
    step = max(1, math.ceil(max_round / 10))
    for t in range(0, max_round + 1, step):
        out.append(f'<text x="{_num(sx(t))}" y="{TOP + plot_h + 16}" text-anchor="middle" '
                   f'font-size="10">{t}</text>')
    out.append(f'<text x="{LEFT + plot_w / 2:.0f}" y="{HEIGHT - 12}" text-anchor="middle" '
               f'font-size="12">round</text>')
    for name in sorted(rules):
        y = _num(sy(rules[name]))
        out.append(f'<line class="baseline" data-method="{escape(name)}" x1="{LEFT}" '
                   f'y1="{y}" x2="{LEFT + plot_w}" y2="{y}" stroke="{color[name]}" '
                   f'stroke-dasharray="6 4"/>')
    for name in sorted(lines):
        pts = " ".join(f"{_num(sx(t))},{_num(sy(y))}" for t, y in lines[name])
        out.append(f'<polyline class="method" data-method="{escape(name)}" points="{pts}" '
                   f'stroke="{color[name]}" fill="none" stroke-width="2"/>')
    for i, name in enumerate(names):
        y = TOP + 14 * i
        out.append(f'<rect x="{WIDTH - RIGHT + 12}" y="{y}" width="10" height="10" '
                   f'fill="{color[name]}"/>')
        out.append(f'<text x="{WIDTH - RIGHT + 28}" y="{y + 9}" font-size="11">'
                   f'{escape(name)}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def emit_plots(csv_path, out_dir=None, dataset=None):
    """Write one SVG per plotted column; returns the paths.

    Columns with no finite values are skipped. A CSV without any method
    rows raises :class:`DataError` and writes nothing.
    """
    csv_path = Path(csv_path)
    rows = read_rows(csv_path)
    if not rows:
        raise DataError(f"{csv_path}: no method rows to plot")
    out_dir = Path(out_dir) if out_dir is not None else csv_path.parent
    title = dataset or csv_path.stem
    rendered = []
    for column in PLOTTED:
        lines, rules = series(rows, column)
        if lines or rules:
            rendered.append((column, render_svg(title, column, lines, rules)))
    if not rendered:
        raise DataError(f"{csv_path}: no finite values to plot")
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = []
    for column, svg in rendered:
        target = out_dir / f"{csv_path.stem}.{column}.svg"
        target.write_text(svg)
        paths.append(target)
    return paths
