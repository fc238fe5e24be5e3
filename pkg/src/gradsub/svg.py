"""Hand-emitted SVG line chart: fixed 800x500 viewport, 10-tick axes, legend.

One ``<polyline>`` per series; nothing else in the document is a polyline,
so consumers can count curves by counting that element.
"""

import math
from xml.sax.saxutils import escape

WIDTH, HEIGHT = 800, 500
TICKS = 10
_LEFT, _RIGHT, _TOP, _BOTTOM = 70, 170, 40, 60
_COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f")


def _num(x):
    """Short, locale-free coordinate text."""
    return format(round(float(x), 3), "g")


def _tick_label(x):
    return format(float(x), ".3g")


def _bounds(values, pad_zero=False):
    finite = [v for v in values if math.isfinite(v)]
    if not finite:
        return 0.0, 1.0
    lo, hi = min(finite), max(finite)
    if pad_zero:
        lo = min(lo, 0.0)
    if hi == lo:
        hi = lo + 1.0
    return lo, hi


def line_chart(series, title="", x_label="step", y_label="value", y_range=None):
    """``series``: ordered ``[(label, xs, ys), ...]``; returns the SVG document text.

    Non-finite y values break nothing: those points are dropped from the
    polyline.
    """
    xs_all = [x for _, xs, _ in series for x in xs]
    ys_all = [y for _, _, ys in series for y in ys]
    x0, x1 = _bounds(xs_all)
    y0, y1 = y_range if y_range is not None else _bounds(ys_all, pad_zero=True)
    pw = WIDTH - _LEFT - _RIGHT
    ph = HEIGHT - _TOP - _BOTTOM

    def px(x):
        return _LEFT + (x - x0) / (x1 - x0) * pw

    def py(y):
        return _TOP + ph - (y - y0) / (y1 - y0) * ph

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
        f'viewBox="0 0 {WIDTH} {HEIGHT}">',
        f'<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="white"/>',
    ]
    if title:
        out.append(f'<text x="{WIDTH / 2:g}" y="24" text-anchor="middle" font-size="16">{escape(title)}</text>')
    # axes
    bx, by = _LEFT, _TOP + ph
    out.append(f'<line x1="{bx}" y1="{by}" x2="{bx + pw}" y2="{by}" stroke="black"/>')
    out.append(f'<line x1="{bx}" y1="{_TOP}" x2="{bx}" y2="{by}" stroke="black"/>')
    for i in range(TICKS + 1):
        xv = x0 + (x1 - x0) * i / TICKS
        yv = y0 + (y1 - y0) * i / TICKS
        tx, ty = px(xv), py(yv)
        out.append(f'<line x1="{_num(tx)}" y1="{by}" x2="{_num(tx)}" y2="{by + 5}" stroke="black"/>')
        out.append(
            f'<text x="{_num(tx)}" y="{by + 18}" text-anchor="middle" font-size="11">{_tick_label(xv)}</text>'
        )
        out.append(f'<line x1="{bx - 5}" y1="{_num(ty)}" x2="{bx}" y2="{_num(ty)}" stroke="black"/>')
        out.append(
            f'<text x="{bx - 8}" y="{_num(ty + 4)}" text-anchor="end" font-size="11">{_tick_label(yv)}</text>'
        )
    out.append(
        f'<text x="{bx + pw / 2:g}" y="{HEIGHT - 15}" text-anchor="middle" font-size="13">{escape(x_label)}</text>'
    )
    out.append(
        f'<text x="18" y="{_TOP + ph / 2:g}" text-anchor="middle" font-size="13" '
        f'transform="rotate(-90 18 {_TOP + ph / 2:g})">{escape(y_label)}</text>'
    )
    # curves and legend
    for i, (label, xs, ys) in enumerate(series):
        color = _COLORS[i % len(_COLORS)]
        pts = " ".join(
            f"{_num(px(x))},{_num(py(y))}" for x, y in zip(xs, ys) if math.isfinite(x) and math.isfinite(y)
        )
        out.append(f'<polyline fill="none" stroke="{color}" stroke-width="2" points="{pts}"/>')
        ly = _TOP + 20 + 22 * i
        lx = WIDTH - _RIGHT + 20
        out.append(f'<line x1="{lx}" y1="{ly}" x2="{lx + 24}" y2="{ly}" stroke="{color}" stroke-width="2"/>')
        out.append(f'<text x="{lx + 30}" y="{ly + 4}" font-size="12">{escape(label)}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"
