"""Stick-figure SVG emission for pose sequences.

Renders 17-joint skeletons as flat files only: one SVG per frame plus one
SMIL-animated SVG for the whole sequence.  The projection is orthographic
onto a configurable view plane ("xz" shows the subject face-on with height
up the page).  Output is deterministic byte-for-byte: coordinates are
formatted with a fixed precision and the canvas is derived from the data.
"""

from __future__ import annotations

import os

import numpy as np

from .errors import ContractError
from .motiondata import BONES, JOINT_NAMES
from .util import atomic_write_text

# (horizontal axis, vertical axis) indices into the (x, y, z) coordinate
VIEW_PLANES = {"xz": (0, 2), "yz": (1, 2), "xy": (0, 1)}

_F = "{:.4f}".format          # fixed float formatting keeps bytes stable
BONE_STYLE = 'stroke="#33506e" stroke-width="{sw}" stroke-linecap="round"'
JOINT_STYLE = 'fill="#c0392b"'


def project(frames, plane="xz"):
    """Orthographic projection to SVG coordinates, (n, K, 2); y grows down."""
    if plane not in VIEW_PLANES:
        raise ContractError(f"unknown view plane {plane!r}; "
                            f"choose from {sorted(VIEW_PLANES)}")
    frames = np.asarray(frames, dtype=float)
    if frames.ndim != 3 or frames.shape[2] != 3:
        raise ContractError(f"expected (frames, joints, 3), got {frames.shape}")
    if frames.shape[1] != len(JOINT_NAMES):
        raise ContractError(
            f"sequence has {frames.shape[1]} joints; the renderer knows the "
            f"{len(JOINT_NAMES)}-joint skeleton")
    h_ax, v_ax = VIEW_PLANES[plane]
    pts = np.empty(frames.shape[:2] + (2,))
    pts[..., 0] = frames[..., h_ax]
    pts[..., 1] = -frames[..., v_ax]
    return pts


def _canvas(pts, margin_frac=0.08):
    """Shared viewBox over all frames so the figure does not jump."""
    lo = pts.reshape(-1, 2).min(axis=0)
    hi = pts.reshape(-1, 2).max(axis=0)
    span = float(max(hi[0] - lo[0], hi[1] - lo[1], 1e-6))
    m = margin_frac * span
    view = (lo[0] - m, lo[1] - m, (hi[0] - lo[0]) + 2 * m,
            (hi[1] - lo[1]) + 2 * m)
    return view, span


def _svg_open(view, px=400):
    x, y, w, h = view
    height = px * h / w if w > 0 else px
    return ('<svg xmlns="http://www.w3.org/2000/svg" '
            f'width="{px}" height="{_F(height)}" '
            f'viewBox="{_F(x)} {_F(y)} {_F(w)} {_F(h)}">')


def frame_markup(pts, view, span):
    """SVG document for a single projected frame (K, 2)."""
    sw = _F(0.02 * span)
    r = _F(0.016 * span)
    lines = [_svg_open(view)]
    for a, b in BONES:
        lines.append(f'<line x1="{_F(pts[a, 0])}" y1="{_F(pts[a, 1])}" '
                     f'x2="{_F(pts[b, 0])}" y2="{_F(pts[b, 1])}" '
                     + BONE_STYLE.format(sw=sw) + "/>")
    for j in range(pts.shape[0]):
        lines.append(f'<circle cx="{_F(pts[j, 0])}" cy="{_F(pts[j, 1])}" '
                     f'r="{r}" {JOINT_STYLE}/>')
    lines.append("</svg>")
    return "\n".join(lines) + "\n"


def animation_markup(pts, view, span, fps=25):
    """One SMIL-animated SVG covering all frames.

    Bones are polylines whose point list is animated; joints are circles
    with animated centers.  A single-frame sequence degenerates to a static
    document with no animate elements.
    """
    if fps <= 0:
        raise ContractError(f"fps must be positive, got {fps}")
    n = pts.shape[0]
    dur = _F(n / fps) + "s"
    sw = _F(0.02 * span)
    r = _F(0.016 * span)

    def animate(attr, values):
        return (f'<animate attributeName="{attr}" dur="{dur}" '
                f'repeatCount="indefinite" values="{values}"/>')

    lines = [_svg_open(view)]
    for a, b in BONES:
        first = (f'{_F(pts[0, a, 0])},{_F(pts[0, a, 1])} '
                 f'{_F(pts[0, b, 0])},{_F(pts[0, b, 1])}')
        lines.append(f'<polyline points="{first}" fill="none" '
                     + BONE_STYLE.format(sw=sw) + ">")
        if n > 1:
            vals = ";".join(
                f'{_F(pts[t, a, 0])},{_F(pts[t, a, 1])} '
                f'{_F(pts[t, b, 0])},{_F(pts[t, b, 1])}' for t in range(n))
            lines.append(animate("points", vals))
        lines.append("</polyline>")
    for j in range(pts.shape[1]):
        lines.append(f'<circle cx="{_F(pts[0, j, 0])}" cy="{_F(pts[0, j, 1])}" '
                     f'r="{r}" {JOINT_STYLE}>')
        if n > 1:
            lines.append(animate("cx", ";".join(_F(pts[t, j, 0])
                                                for t in range(n))))
            lines.append(animate("cy", ";".join(_F(pts[t, j, 1])
                                                for t in range(n))))
        lines.append("</circle>")
    lines.append("</svg>")
    return "\n".join(lines) + "\n"


def render_sequence(frames, out_dir, fps=25, plane="xz", stem="frame"):
    """Write per-frame SVGs plus an animated SVG; returns the written paths.

    frames: (n, K, 3) raw coordinates.  Files land in out_dir as
    {stem}_000.svg ... and animation.svg; identical input produces
    identical bytes.
    """
    pts = project(frames, plane)
    view, span = _canvas(pts)
    os.makedirs(out_dir, exist_ok=True)
    frame_paths = []
    for t in range(pts.shape[0]):
        path = os.path.join(out_dir, f"{stem}_{t:03d}.svg")
        atomic_write_text(path, frame_markup(pts[t], view, span))
        frame_paths.append(path)
    anim_path = os.path.join(out_dir, "animation.svg")
    atomic_write_text(anim_path, animation_markup(pts, view, span, fps=fps))
    return frame_paths, anim_path
