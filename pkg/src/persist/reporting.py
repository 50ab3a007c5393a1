"""Artifact writers: deterministic CSV/JSON files and log-log SVG plots."""

from __future__ import annotations

import json
import math
from pathlib import Path

_W, _H = 640, 440
_PAD = 60
_COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e")


def write_text(path: Path, text: str) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text)
    return path


def write_json(path: Path, obj) -> Path:
    return write_text(path, json.dumps(obj, indent=1) + "\n")


def loglog_svg(series, ref_slopes=(), title="", xlabel="n", ylabel="p") -> str:
    """Polyline plot of positive (x, y) series on log-log axes.

    ``series`` is a list of ``(label, xs, ys)``; each reference slope -g is drawn
    through the first point of the first series.
    """
    pts = [(x, y) for _, xs, ys in series for x, y in zip(xs, ys) if x > 0 and y > 0]
    if not pts:
        raise ValueError("nothing positive to plot")
    lx = [math.log10(x) for x, _ in pts]
    ly = [math.log10(y) for _, y in pts]
    x0, x1 = min(lx), max(lx)
    y0, y1 = min(ly), max(ly)
    if x1 == x0:
        x1 = x0 + 1
    if y1 == y0:
        y1 = y0 + 1

    def sx(v):
        return _PAD + (math.log10(v) - x0) / (x1 - x0) * (_W - 2 * _PAD)

    def sy(v):
        return _H - _PAD - (math.log10(v) - y0) / (y1 - y0) * (_H - 2 * _PAD)

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{_W}" height="{_H}" viewBox="0 0 {_W} {_H}">',
        '<rect width="100%" height="100%" fill="white"/>',
        f'<text x="{_W / 2:.0f}" y="24" text-anchor="middle" font-size="14">{_esc(title)}</text>',
        f'<line x1="{_PAD}" y1="{_H - _PAD}" x2="{_W - _PAD}" y2="{_H - _PAD}" stroke="black"/>',
        f'<line x1="{_PAD}" y1="{_PAD}" x2="{_PAD}" y2="{_H - _PAD}" stroke="black"/>',
        f'<text x="{_W / 2:.0f}" y="{_H - 15}" text-anchor="middle" font-size="12">{_esc(xlabel)} (log)</text>',
        f'<text x="15" y="{_H / 2:.0f}" font-size="12" transform="rotate(-90 15 {_H / 2:.0f})" '
        f'text-anchor="middle">{_esc(ylabel)} (log)</text>',
    ]
    for e in range(math.ceil(x0), math.floor(x1) + 1):
        x = _PAD + (e - x0) / (x1 - x0) * (_W - 2 * _PAD)
        out.append(f'<text x="{x:.1f}" y="{_H - _PAD + 16}" text-anchor="middle" font-size="10">1e{e}</text>')
    for e in range(math.ceil(y0), math.floor(y1) + 1):
        y = _H - _PAD - (e - y0) / (y1 - y0) * (_H - 2 * _PAD)
        out.append(f'<text x="{_PAD - 6}" y="{y + 3:.1f}" text-anchor="end" font-size="10">1e{e}</text>')
    for i, (label, xs, ys) in enumerate(series):
        color = _COLORS[i % len(_COLORS)]
        coords = " ".join(f"{sx(x):.2f},{sy(y):.2f}" for x, y in zip(xs, ys) if x > 0 and y > 0)
        out.append(f'<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{coords}"/>')
        out.append(f'<text x="{_W - _PAD - 4}" y="{_PAD + 14 * i}" text-anchor="end" font-size="11" '
                   f'fill="{color}">{_esc(label)}</text>')
    if ref_slopes:
        _, xs, ys = series[0]
        ax, ay = next((x, y) for x, y in zip(xs, ys) if x > 0 and y > 0)
        bx = 10**x1
        for j, g in enumerate(ref_slopes):
            by = ay * (bx / ax) ** (-g)
            out.append(f'<line x1="{sx(ax):.2f}" y1="{sy(ay):.2f}" x2="{sx(bx):.2f}" y2="{sy(by):.2f}" '
                       f'stroke="gray" stroke-dasharray="4 3"/>')
            out.append(f'<text x="{sx(bx) - 4:.2f}" y="{sy(by) - 4:.2f}" text-anchor="end" font-size="10" '
                       f'fill="gray">slope -{g:.4g}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def _esc(s: str) -> str:
    return s.replace("&", "&amp;").replace("<", "&lt;").replace(">", "&gt;")
