"""Static SVG drawings of workspaces and paths (XY projection for 3D)."""

from __future__ import annotations

from pathlib import Path as FsPath
from typing import Sequence

import numpy as np

from ..geometry import Workspace

SIZE = 600
PAD = 10


def _fmt(v: float) -> str:
    return f"{v:.3f}"


def render_svg(
    w: Workspace,
    paths: Sequence[tuple[Sequence, str]] = (),
    out=None,
    start=None,
    goal=None,
    goal_radius: float | None = None,
) -> str:
    """Draw obstacles as filled rects and each path as one polyline.

    Returns the SVG text and writes it to ``out`` when given. Output depends
    only on the inputs.
    """
    lo = np.array(w.bounds_min[:2], float)
    hi = np.array(w.bounds_max[:2], float)
    scale = (SIZE - 2 * PAD) / float(max(hi - lo))

    def xy(p):
        x = PAD + (p[0] - lo[0]) * scale
        y = PAD + (hi[1] - p[1]) * scale  # flip so +y points up
        return x, y

    width = 2 * PAD + (hi[0] - lo[0]) * scale
    height = 2 * PAD + (hi[1] - lo[1]) * scale
    out_lines = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{_fmt(width)}" height="{_fmt(height)}" '
        f'viewBox="0 0 {_fmt(width)} {_fmt(height)}">',
    ]
    corners = [(lo[0], lo[1]), (hi[0], lo[1]), (hi[0], hi[1]), (lo[0], hi[1])]
    frame = " ".join(f"{_fmt(a)},{_fmt(b)}" for a, b in map(xy, corners))
    out_lines.append(f'<polygon points="{frame}" fill="white" stroke="black" stroke-width="1"/>')
    for o in w.obstacles:
        x0, y1 = xy(o.min_corner)
        x1, y0 = xy(o.max_corner)
        out_lines.append(
            f'<rect x="{_fmt(x0)}" y="{_fmt(y0)}" width="{_fmt(x1 - x0)}" height="{_fmt(y1 - y0)}" '
            'fill="dimgray" fill-opacity="0.6"/>'
        )
    for path, color in paths:
        pts = " ".join(f"{_fmt(a)},{_fmt(b)}" for a, b in (xy(np.asarray(s, float)) for s in path))
        out_lines.append(f'<polyline points="{pts}" fill="none" stroke="{color}" stroke-width="2"/>')
    if goal is not None and goal_radius is not None:
        gx, gy = xy(goal)
        out_lines.append(
            f'<circle cx="{_fmt(gx)}" cy="{_fmt(gy)}" r="{_fmt(goal_radius * scale)}" '
            'fill="none" stroke="green" stroke-dasharray="4 2"/>'
        )
    for p, color in ((start, "blue"), (goal, "green")):
        if p is not None:
            cx, cy = xy(p)
            out_lines.append(f'<circle cx="{_fmt(cx)}" cy="{_fmt(cy)}" r="5" fill="{color}"/>')
    out_lines.append("</svg>")
    text = "\n".join(out_lines) + "\n"
    if out is not None:
        FsPath(out).parent.mkdir(parents=True, exist_ok=True)
        FsPath(out).write_text(text)
    return text
