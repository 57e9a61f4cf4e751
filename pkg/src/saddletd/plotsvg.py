"""Minimal standalone SVG line charts (log-log), no plotting dependency.

Output is deterministic: fixed canvas, fixed palette, coordinates rounded to
two decimals.
"""

from __future__ import annotations

import math

PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e",
           "#8c564b", "#e377c2", "#17becf")

WIDTH, HEIGHT = 720, 480
MARGIN_L, MARGIN_R, MARGIN_T, MARGIN_B = 80, 24, 40, 56
FLOOR = 1e-300


def _decades(lo: float, hi: float):
    start = math.floor(math.log10(lo))
    stop = math.ceil(math.log10(hi))
    return [10.0 ** e for e in range(start, stop + 1)]


def _fmt_tick(v: float) -> str:
    e = round(math.log10(v))
    return f"1e{e:d}"


class _LogAxis:
    def __init__(self, lo, hi, pix_lo, pix_hi):
        if hi <= lo:
            hi = lo * 10.0
        self.llo, self.lhi = math.log10(lo), math.log10(hi)
        self.pix_lo, self.pix_hi = pix_lo, pix_hi

    def __call__(self, v: float) -> float:
        frac = (math.log10(max(v, FLOOR)) - self.llo) / (self.lhi - self.llo)
        return self.pix_lo + frac * (self.pix_hi - self.pix_lo)


def loglog_chart(path, series, title: str, xlabel: str, ylabel: str) -> None:
    """Write a log-log line chart.

    series: iterable of (label, xs, ys); nonpositive points are dropped from
    the drawn polylines (they cannot appear on log axes).
    """
    cleaned = []
    for label, xs, ys in series:
        pts = [(float(x), float(y)) for x, y in zip(xs, ys) if x > 0 and y > 0]
        cleaned.append((label, pts))
    all_x = [p[0] for _, pts in cleaned for p in pts]
    all_y = [p[1] for _, pts in cleaned for p in pts]
    if not all_x:
        all_x, all_y = [1.0, 10.0], [1.0, 10.0]
    ax_x = _LogAxis(min(all_x), max(all_x), MARGIN_L, WIDTH - MARGIN_R)
    ax_y = _LogAxis(min(all_y), max(all_y), HEIGHT - MARGIN_B, MARGIN_T)

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
        f'viewBox="0 0 {WIDTH} {HEIGHT}">',
        f'<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>',
        f'<text x="{WIDTH / 2:.2f}" y="24" text-anchor="middle" '
        f'font-family="sans-serif" font-size="16">{title}</text>',
    ]
    x0, x1 = MARGIN_L, WIDTH - MARGIN_R
    y0, y1 = HEIGHT - MARGIN_B, MARGIN_T
    for v in _decades(min(all_x), max(all_x)):
        px = ax_x(v)
        if x0 - 0.5 <= px <= x1 + 0.5:
            parts.append(f'<line x1="{px:.2f}" y1="{y0}" x2="{px:.2f}" y2="{y1}" '
                         f'stroke="#dddddd" stroke-width="1"/>')
            parts.append(f'<text x="{px:.2f}" y="{y0 + 18}" text-anchor="middle" '
                         f'font-family="sans-serif" font-size="11">{_fmt_tick(v)}</text>')
    for v in _decades(min(all_y), max(all_y)):
        py = ax_y(v)
        if y1 - 0.5 <= py <= y0 + 0.5:
            parts.append(f'<line x1="{x0}" y1="{py:.2f}" x2="{x1}" y2="{py:.2f}" '
                         f'stroke="#dddddd" stroke-width="1"/>')
            parts.append(f'<text x="{x0 - 6}" y="{py + 4:.2f}" text-anchor="end" '
                         f'font-family="sans-serif" font-size="11">{_fmt_tick(v)}</text>')
    parts.append(f'<line x1="{x0}" y1="{y0}" x2="{x1}" y2="{y0}" stroke="black"/>')
    parts.append(f'<line x1="{x0}" y1="{y0}" x2="{x0}" y2="{y1}" stroke="black"/>')
    parts.append(f'<text x="{(x0 + x1) / 2:.2f}" y="{HEIGHT - 14}" text-anchor="middle" '
                 f'font-family="sans-serif" font-size="13">{xlabel}</text>')
    parts.append(f'<text x="20" y="{(y0 + y1) / 2:.2f}" text-anchor="middle" '
                 f'font-family="sans-serif" font-size="13" '
                 f'transform="rotate(-90 20 {(y0 + y1) / 2:.2f})">{ylabel}</text>')
    for idx, (label, pts) in enumerate(cleaned):
        color = PALETTE[idx % len(PALETTE)]
        if pts:
            coords = " ".join(f"{ax_x(x):.2f},{ax_y(y):.2f}" for x, y in pts)
            parts.append(f'<polyline fill="none" stroke="{color}" stroke-width="1.8" '
                         f'points="{coords}"/>')
        ly = MARGIN_T + 16 + 18 * idx
        parts.append(f'<line x1="{x1 - 150}" y1="{ly - 4}" x2="{x1 - 120}" y2="{ly - 4}" '
                     f'stroke="{color}" stroke-width="3"/>')
        parts.append(f'<text x="{x1 - 112}" y="{ly}" font-family="sans-serif" '
                     f'font-size="12">{label}</text>')
    parts.append("</svg>")
    with open(path, "w", newline="\n") as fh:
        fh.write("\n".join(parts) + "\n")
