"""Deterministic SVG reports: top-down layout panels and boundary overlays.

Everything is emitted with fixed-precision coordinates so identical inputs
produce identical bytes, which keeps reports diffable in CI.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .renderer import BoundaryObservation, ColumnAssignment, ImageGeometry, project_assigned_boundary
from .scene import Scene

_PANEL = 320          # px per layout panel
_PAD = 24
_COLORS = ("#1f77b4", "#2ca02c", "#7f7f7f")  # before / after / ground truth


def _fmt(x: float) -> str:
    return f"{x:.3f}"


def _panel_transform(scene: Scene, size: int, pad: int):
    pts = np.vstack([r.vertices for r in scene.rooms])
    lo, hi = pts.min(axis=0), pts.max(axis=0)
    span = float(np.max(hi - lo))
    span = span if span > 0 else 1.0
    scale = (size - 2 * pad) / span
    center = (lo + hi) / 2.0

    def to_px(p, ox):
        x = (p[0] - center[0]) * scale + size / 2 + ox
        y = size / 2 - (p[1] - center[1]) * scale
        return x, y

    return to_px


def _polygon_path(vertices, to_px, ox) -> str:
    pts = " ".join(f"{_fmt(to_px(v, ox)[0])},{_fmt(to_px(v, ox)[1])}" for v in vertices)
    return pts


def _layout_panel(scene: Scene, label: str, color: str, ox: float) -> list[str]:
    to_px = _panel_transform(scene, _PANEL, _PAD)
    parts = [f'<text x="{_fmt(ox + _PANEL / 2)}" y="16" text-anchor="middle" '
             f'font-size="13" fill="{color}">{label}</text>']
    for room in scene.rooms:
        parts.append(f'<polygon points="{_polygon_path(room.vertices, to_px, ox)}" '
                     f'fill="none" stroke="{color}" stroke-width="1.5"/>')
    for door in scene.doors:
        parts.append(f'<polygon points="{_polygon_path(door.vertices, to_px, ox)}" '
                     f'fill="none" stroke="{color}" stroke-width="0.7" '
                     f'stroke-dasharray="3,2"/>')
    for cam in scene.cameras:
        cx, cy = to_px(cam.position, ox)
        parts.append(f'<circle cx="{_fmt(cx)}" cy="{_fmt(cy)}" r="3.5" fill="{color}"/>')
        tip = cam.position + 0.08 * np.array([np.sin(cam.rotation), np.cos(cam.rotation)])
        tx, ty = to_px(tip, ox)
        parts.append(f'<line x1="{_fmt(cx)}" y1="{_fmt(cy)}" x2="{_fmt(tx)}" '
                     f'y2="{_fmt(ty)}" stroke="{color}" stroke-width="1.2"/>')
    return parts


def layout_triptych_svg(scenes: list[tuple[str, Scene]], path) -> None:
    """Side-by-side top-down panels (typically before / after / ground truth)."""
    width = _PANEL * len(scenes)
    parts = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" '
             f'height="{_PANEL}" viewBox="0 0 {width} {_PANEL}">',
             f'<rect width="{width}" height="{_PANEL}" fill="white"/>']
    for i, (label, scene) in enumerate(scenes):
        color = _COLORS[i % len(_COLORS)]
        parts.extend(_layout_panel(scene, label, color, i * _PANEL))
    parts.append("</svg>")
    Path(path).write_text("\n".join(parts) + "\n")


def _row_polyline(rows: np.ndarray, valid: np.ndarray, width: int, height: int,
                  sx: float, sy: float, color: str) -> list[str]:
    parts = []
    run = []
    for c in range(width):
        if valid[c]:
            run.append(f"{_fmt(c * sx)},{_fmt(rows[c] * sy)}")
        elif run:
            if len(run) > 1:
                parts.append(f'<polyline points="{" ".join(run)}" fill="none" '
                             f'stroke="{color}" stroke-width="1"/>')
            run = []
    if len(run) > 1:
        parts.append(f'<polyline points="{" ".join(run)}" fill="none" '
                     f'stroke="{color}" stroke-width="1"/>')
    return parts


def boundary_overlay_svg(scene: Scene, boundary: BoundaryObservation,
                         assignment: ColumnAssignment, geom: ImageGeometry,
                         path) -> None:
    """Observed vs re-projected boundary curves for one camera."""
    cam = next(c for c in scene.cameras if c.id == boundary.camera_id)
    projected = project_assigned_boundary(scene, cam, assignment, geom)
    w_px, h_px = 512, 256
    sx, sy = w_px / geom.width, h_px / geom.height
    parts = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{w_px}" '
             f'height="{h_px}" viewBox="0 0 {w_px} {h_px}">',
             f'<rect width="{w_px}" height="{h_px}" fill="white"/>',
             f'<line x1="0" y1="{_fmt(h_px / 2)}" x2="{w_px}" y2="{_fmt(h_px / 2)}" '
             f'stroke="#dddddd" stroke-width="1"/>']
    parts += _row_polyline(boundary.rows, boundary.valid, geom.width, geom.height,
                           sx, sy, "#2ca02c")
    parts += _row_polyline(projected.rows, projected.valid, geom.width, geom.height,
                           sx, sy, "#1f77b4")
    parts.append(f'<text x="8" y="16" font-size="12" fill="#2ca02c">observed</text>')
    parts.append(f'<text x="8" y="32" font-size="12" fill="#1f77b4">projected '
                 f'(camera {boundary.camera_id})</text>')
    parts.append("</svg>")
    Path(path).write_text("\n".join(parts) + "\n")
