"""Top-down overview plot written directly as SVG."""
from __future__ import annotations

from pathlib import Path
from xml.sax.saxutils import escape

import numpy as np

from .maps import BinaryMap
from .tracker import TrackRow, TrackStatus

PALETTE = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#e377c2", "#17becf"]


def _runs(line: np.ndarray) -> list[tuple[int, int]]:
    padded = np.concatenate([[0], line.astype(np.int8), [0]])
    edges = np.flatnonzero(np.diff(padded))
    return list(zip(edges[::2].tolist(), edges[1::2].tolist()))


def overview_svg(m: BinaryMap, detections_xy: np.ndarray, rows: list[TrackRow],
                 truth: dict[int, np.ndarray] | None = None, title: str = "", scale: float = 4.0) -> str:
    """Map cells in grey, detections as dots, confirmed track polylines labelled by id.

    World y points up; SVG y points down, so rows are flipped.
    """
    g = m.grid
    w, h = g.n_cols * g.cell_size * scale, g.n_rows * g.cell_size * scale

    def sx(x):
        return (x - g.origin_x) * scale

    def sy(y):
        return h - (y - g.origin_y) * scale

    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{w:.0f}" height="{h + 20:.0f}" '
           f'viewBox="0 -20 {w:.0f} {h + 20:.0f}">',
           f'<rect x="0" y="0" width="{w:.1f}" height="{h:.1f}" fill="#eaf2fb"/>',
           f'<text x="4" y="-6" font-family="sans-serif" font-size="12">{escape(title)}</text>',
           '<g fill="#555" stroke="none">']
    cs = g.cell_size * scale
    for row in range(g.n_rows):
        for a, b in _runs(m.cells[row]):
            out.append(f'<rect x="{a * cs:.1f}" y="{h - (row + 1) * cs:.1f}" width="{(b - a) * cs:.1f}" '
                       f'height="{cs:.1f}"/>')
    out.append("</g>")

    if truth:
        out.append('<g fill="none" stroke="#000" stroke-dasharray="4 3" stroke-width="1">')
        for tid in sorted(truth):
            pts = " ".join(f"{sx(x):.1f},{sy(y):.1f}" for x, y in truth[tid])
            out.append(f'<polyline points="{pts}"/>')
        out.append("</g>")

    out.append('<g fill="#f0a020" stroke="none">')
    for x, y in np.asarray(detections_xy, dtype=float).reshape(-1, 2):
        out.append(f'<circle cx="{sx(x):.1f}" cy="{sy(y):.1f}" r="1.2"/>')
    out.append("</g>")

    tracks: dict[int, list[TrackRow]] = {}
    for r in rows:
        if r.status == TrackStatus.CONFIRMED.value:
            tracks.setdefault(r.track_id, []).append(r)
    for k, tid in enumerate(sorted(tracks)):
        col = PALETTE[k % len(PALETTE)]
        pts = " ".join(f"{sx(r.x):.1f},{sy(r.y):.1f}" for r in tracks[tid])
        last = tracks[tid][-1]
        out.append(f'<polyline points="{pts}" fill="none" stroke="{col}" stroke-width="2"/>')
        out.append(f'<text x="{sx(last.x) + 4:.1f}" y="{sy(last.y) - 4:.1f}" font-family="sans-serif" '
                   f'font-size="11" fill="{col}">{tid}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def write_overview(path, *args, **kwargs) -> None:
    Path(path).write_text(overview_svg(*args, **kwargs), encoding="utf-8")
