"""Self-contained SVG heatmap of per-position success rates."""

from __future__ import annotations

import csv
from collections import defaultdict
from pathlib import Path
from typing import Optional, Sequence
from xml.sax.saxutils import escape

CELL = 36
MARGIN_LEFT = 64
MARGIN_TOP = 40
MARGIN_BOTTOM = 56
LEGEND_W = 90

# red (0) -> yellow (0.5) -> green (1)
_RAMP = ((0.0, (215, 48, 39)), (0.5, (254, 224, 139)), (1.0, (26, 152, 80)))


def color(rate: Optional[float]) -> str:
    if rate is None:
        return "#bbbbbb"
    r = min(1.0, max(0.0, rate))
    for (a, ca), (b, cb) in zip(_RAMP, _RAMP[1:]):
        if r <= b:
            t = (r - a) / (b - a)
            rgb = tuple(round(x + (y - x) * t) for x, y in zip(ca, cb))
            return "#%02x%02x%02x" % rgb
    return "#%02x%02x%02x" % _RAMP[-1][1]


def matrix_from_runs_csv(path) -> tuple[list[list[Optional[float]]], list[float], list[float]]:
    """Per-cell mean success from a grid ``runs.csv`` (needs x, y, success_fraction)."""
    cells: dict[tuple[float, float], list[float]] = defaultdict(list)
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        missing = {"x", "y", "success_fraction"} - set(reader.fieldnames or ())
        if missing:
            raise ValueError(f"{path}: missing column(s) {', '.join(sorted(missing))}")
        for row in reader:
            cells[(float(row["x"]), float(row["y"]))].append(float(row["success_fraction"]))
    if not cells:
        raise ValueError(f"{path}: no rows")
    xs = sorted({x for x, _ in cells})
    ys = sorted({y for _, y in cells})
    m: list[list[Optional[float]]] = [[None] * len(xs) for _ in ys]
    for (x, y), vals in cells.items():
        m[ys.index(y)][xs.index(x)] = sum(vals) / len(vals)
    return m, xs, ys


def render_svg(matrix: Sequence[Sequence[Optional[float]]], xs: Sequence[float], ys: Sequence[float]) -> str:
    """Rows of ``matrix`` follow ``ys`` (base side first); drawn with the base at the bottom."""
    nx, ny = len(xs), len(ys)
    if len(matrix) != ny or any(len(r) != nx for r in matrix):
        raise ValueError("matrix shape does not match the axes")
    width = MARGIN_LEFT + nx * CELL + LEGEND_W
    height = MARGIN_TOP + ny * CELL + MARGIN_BOTTOM
    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="10">',
        f'<rect x="0" y="0" width="{width}" height="{height}" fill="white"/>',
        f'<text x="{MARGIN_LEFT}" y="20" font-size="13">Success rate per object position (base at x=0, y=0)</text>',
        '<g id="cells">',
    ]
    for k in range(ny):
        py = MARGIN_TOP + (ny - 1 - k) * CELL
        for i in range(nx):
            px = MARGIN_LEFT + i * CELL
            v = matrix[k][i]
            label = "" if v is None else f"{v:.1f}"
            out.append(
                f'<rect class="cell" x="{px}" y="{py}" width="{CELL}" height="{CELL}" '
                f'fill="{color(v)}" stroke="white" data-x="{xs[i]:.2f}" data-y="{ys[k]:.2f}">'
                f"<title>x={xs[i]:.2f} y={ys[k]:.2f}: {escape(label or 'n/a')}</title></rect>"
            )
            out.append(
                f'<text x="{px + CELL / 2}" y="{py + CELL / 2 + 3}" text-anchor="middle">{label}</text>'
            )
    out.append("</g>")
    base_y = MARGIN_TOP + ny * CELL
    for i in range(nx):
        out.append(
            f'<text x="{MARGIN_LEFT + i * CELL + CELL / 2}" y="{base_y + 14}" '
            f'text-anchor="middle">{xs[i]:.2f}</text>'
        )
    for k in range(ny):
        out.append(
            f'<text x="{MARGIN_LEFT - 6}" y="{MARGIN_TOP + (ny - 1 - k) * CELL + CELL / 2 + 3}" '
            f'text-anchor="end">{ys[k]:.2f}</text>'
        )
    out.append(
        f'<text x="{MARGIN_LEFT + nx * CELL / 2}" y="{base_y + 36}" text-anchor="middle">x [m]</text>'
    )
    out.append(f'<text x="14" y="{MARGIN_TOP + ny * CELL / 2}" transform="rotate(-90 14 '
               f'{MARGIN_TOP + ny * CELL / 2})" text-anchor="middle">y [m]</text>')
    lx = MARGIN_LEFT + nx * CELL + 24
    steps = 10
    h = ny * CELL / (steps + 1)
    for s in range(steps + 1):
        v = s / steps
        y = MARGIN_TOP + (steps - s) * h
        out.append(f'<rect x="{lx}" y="{y:.1f}" width="16" height="{h:.1f}" fill="{color(v)}"/>')
        if s % 5 == 0:
            out.append(f'<text x="{lx + 22}" y="{y + h / 2 + 3:.1f}">{v:.1f}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def render_csv_to_svg(csv_path, svg_path) -> Path:
    m, xs, ys = matrix_from_runs_csv(csv_path)
    p = Path(svg_path)
    p.write_text(render_svg(m, xs, ys))
    return p
