"""Top-down SVG rendering of a trajectory over its scene.

The SVG is written by hand so output is byte-stable: fixed number
formatting, no timestamps, elements in a fixed order.
"""
from __future__ import annotations

import colorsys
from xml.sax.saxutils import escape

from .navigation import Trajectory
from .scene import Scene

CELL_PX = 16


def subtask_colors(n: int) -> list[str]:
    """``n`` distinct hex colours running light to dark along one hue."""
    out = []
    for k in range(n):
        t = 0.0 if n == 1 else k / (n - 1)
        lightness = 0.72 - 0.47 * t
        r, g, b = colorsys.hls_to_rgb(0.6, lightness, 0.75)
        out.append("#{:02x}{:02x}{:02x}".format(round(r * 255), round(g * 255), round(b * 255)))
    return out


def render_svg(scene: Scene, traj: Trajectory, cell_px: int = CELL_PX) -> str:
    grid = scene.grid
    w, h = grid.width * cell_px, grid.height * cell_px
    scale = cell_px / grid.resolution

    def xy(p) -> str:
        x = (p.x - grid.origin.x) * scale
        y = h - (p.y - grid.origin.y) * scale
        return f"{x:.2f},{y:.2f}"

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">',
        f'<rect x="0" y="0" width="{w}" height="{h}" fill="#ffffff"/>',
        '<g id="obstacles" fill="#444444">',
    ]
    # one rect per horizontal run of blocked cells
    for row in range(grid.height):
        col = 0
        while col < grid.width:
            if grid.free[row, col]:
                col += 1
                continue
            start = col
            while col < grid.width and not grid.free[row, col]:
                col += 1
            y = h - (row + 1) * cell_px
            parts.append(f'<rect x="{start * cell_px}" y="{y}" width="{(col - start) * cell_px}" height="{cell_px}"/>')
    parts.append("</g>")

    parts.append('<g id="regions" fill="none" stroke="#999999" stroke-dasharray="4 3">')
    for region in scene.regions:
        b = region.bbox
        x0 = (b.xmin - grid.origin.x) * scale
        y0 = h - (b.ymax - grid.origin.y) * scale
        parts.append(
            f'<rect x="{x0:.2f}" y="{y0:.2f}" width="{(b.xmax - b.xmin) * scale:.2f}" height="{(b.ymax - b.ymin) * scale:.2f}"/>'
        )
        parts.append(
            f'<text x="{x0 + 4:.2f}" y="{y0 + 14:.2f}" font-size="12" fill="#666666" stroke="none">{escape(region.label)}</text>'
        )
    parts.append("</g>")

    parts.append('<g id="entrances" fill="#e0a000">')
    for region in scene.regions:
        for e in region.entrances:
            x, y = xy(e.midpoint).split(",")
            parts.append(f'<circle cx="{x}" cy="{y}" r="4"/>')
    parts.append("</g>")

    parts.append('<g id="objects" fill="#2a9d55" font-size="10">')
    for obj in scene.objects:
        x, y = xy(obj.position).split(",")
        parts.append(f'<rect x="{float(x) - 3:.2f}" y="{float(y) - 3:.2f}" width="6" height="6"/>')
        parts.append(f'<text x="{float(x) + 5:.2f}" y="{float(y) - 5:.2f}">{escape(obj.label)}</text>')
    parts.append("</g>")

    parts.append('<g id="paths" fill="none" stroke-width="3" stroke-linejoin="round">')
    colors = subtask_colors(len(traj.subtasks))
    prev = traj.start.position
    for k in range(len(traj.subtasks)):
        steps = [s for s in traj.steps if s.subtask_index == k]
        if not steps:
            continue
        # the segment joining the previous sub-task is drawn but not counted as a point
        pts = " ".join(xy(s.pose_after.position) for s in steps)
        parts.append(
            f'<polyline class="subtask" data-subtask="{k}" data-from="{xy(prev)}" stroke="{colors[k]}" points="{pts}"/>'
        )
        prev = steps[-1].pose_after.position
    parts.append("</g>")

    sx, sy = xy(traj.start.position).split(",")
    parts.append(f'<circle id="start" cx="{sx}" cy="{sy}" r="6" fill="#1b9e3e"/>')
    if traj.steps:
        ex, ey = xy(traj.final_pose.position).split(",")
        parts.append(f'<rect id="stop" x="{float(ex) - 5:.2f}" y="{float(ey) - 5:.2f}" width="10" height="10" fill="#c0392b"/>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"
