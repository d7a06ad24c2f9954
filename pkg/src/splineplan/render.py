"""Standalone SVG rendering of 2-D planning scenes, paths, and cost rasters.

No plotting dependency: obstacles and sampled path polylines become plain
SVG elements, and an optional cost raster is embedded as a base64 PNG
(encoded here from scratch) stretched across the workspace.
"""

from __future__ import annotations

import base64
import struct
import zlib
from xml.sax.saxutils import escape

import numpy as np

from .geom import Box, PlanningProblem, Sphere
from .spline import SplinePath, sample_path

PATH_COLORS = ("#2e9e4f", "#8a3fb5", "#d9822b", "#2b6cd9", "#c23b4e")

# blue (low) through neutral to red (high), matching cost-landscape habits
_COLOR_STOPS = ((0.0, (45, 70, 200)), (0.5, (240, 240, 235)), (1.0, (200, 45, 45)))


def _colormap(normalized: np.ndarray) -> np.ndarray:
    """Map values in [0, 1] to RGB uint8 via piecewise-linear stops."""
    t = np.clip(normalized, 0.0, 1.0)
    rgb = np.zeros(t.shape + (3,))
    for (t0, c0), (t1, c1) in zip(_COLOR_STOPS[:-1], _COLOR_STOPS[1:]):
        mask = (t >= t0) & (t <= t1)
        frac = np.zeros_like(t)
        frac[mask] = (t[mask] - t0) / (t1 - t0)
        for ch in range(3):
            rgb[..., ch][mask] = c0[ch] + frac[mask] * (c1[ch] - c0[ch])
    return np.rint(rgb).astype(np.uint8)


def encode_png(rgb: np.ndarray) -> bytes:
    """Minimal 8-bit RGB PNG encoder (one IDAT chunk, no filtering)."""
    height, width, _ = rgb.shape
    raw = b"".join(b"\x00" + rgb[row].tobytes() for row in range(height))

    def chunk(tag: bytes, payload: bytes) -> bytes:
        body = tag + payload
        return struct.pack(">I", len(payload)) + body + struct.pack(">I", zlib.crc32(body))

    header = struct.pack(">IIBBBBB", width, height, 8, 2, 0, 0, 0)
    return (
        b"\x89PNG\r\n\x1a\n"
        + chunk(b"IHDR", header)
        + chunk(b"IDAT", zlib.compress(raw, 6))
        + chunk(b"IEND", b"")
    )


def heatmap_png(values: np.ndarray) -> bytes:
    """Cost raster (x index first, y increasing upward) as PNG bytes."""
    values = np.asarray(values, dtype=float)
    vmin, vmax = float(values.min()), float(values.max())
    span = vmax - vmin if vmax > vmin else 1.0
    normalized = (values - vmin) / span
    # PNG rows run top-down; raster y runs bottom-up; columns are x
    image = np.flipud(normalized.T)
    return encode_png(_colormap(image))


def render_svg(
    problem: PlanningProblem,
    paths: list,
    out_path: str,
    *,
    heatmap: np.ndarray | None = None,
    sample_step: float = 0.01,
    size: int = 640,
) -> None:
    """Write a standalone SVG of the problem and labeled paths.

    ``paths`` is a sequence of (label, SplinePath); each gets its own
    stroke color and a legend entry.  An optional raster of cost values
    over the workspace is embedded underneath the geometry.
    """
    scene = problem.scene
    if scene.dim != 2:
        raise ValueError("SVG rendering supports 2-D problems only")
    x0, y0 = scene.bounds_min
    x1, y1 = scene.bounds_max
    width = x1 - x0
    height = y1 - y0
    scale = size / max(width, height)

    def sx(x):
        return (x - x0) * scale

    def sy(y):
        return (y1 - y) * scale  # flip so y grows upward

    parts = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width * scale:.0f}"'
        f' height="{height * scale:.0f}" viewBox="0 0 {width * scale:.2f} {height * scale:.2f}">',
        f'<rect x="0" y="0" width="{width * scale:.2f}" height="{height * scale:.2f}"'
        ' fill="#fbfbf8"/>',
    ]
    if heatmap is not None:
        encoded = base64.b64encode(heatmap_png(heatmap)).decode()
        parts.append(
            f'<image x="0" y="0" width="{width * scale:.2f}" height="{height * scale:.2f}"'
            f' preserveAspectRatio="none" href="data:image/png;base64,{encoded}"/>'
        )
    for obstacle in scene.obstacles:
        if isinstance(obstacle, Sphere):
            parts.append(
                f'<circle cx="{sx(obstacle.center[0]):.2f}" cy="{sy(obstacle.center[1]):.2f}"'
                f' r="{obstacle.radius * scale:.2f}" fill="#55555f" fill-opacity="0.65"/>'
            )
        elif isinstance(obstacle, Box):
            cx, cy = obstacle.center
            hx, hy = obstacle.half_extents
            parts.append(
                f'<rect x="{sx(cx - hx):.2f}" y="{sy(cy + hy):.2f}"'
                f' width="{2 * hx * scale:.2f}" height="{2 * hy * scale:.2f}"'
                ' fill="#55555f" fill-opacity="0.65"/>'
            )
    for index, (label, path) in enumerate(paths):
        color = PATH_COLORS[index % len(PATH_COLORS)]
        samples = sample_path(path, sample_step)
        points = " ".join(f"{sx(p[0]):.2f},{sy(p[1]):.2f}" for p in samples.points)
        parts.append(
            f'<polyline points="{points}" fill="none" stroke="{color}"'
            f' stroke-width="2.5" data-label="{escape(label)}"/>'
        )
        parts.append(
            f'<text x="8" y="{18 + 16 * index}" font-family="sans-serif" font-size="13"'
            f' fill="{color}">{escape(label)}</text>'
        )
    parts.append(
        f'<circle cx="{sx(problem.start[0]):.2f}" cy="{sy(problem.start[1]):.2f}" r="5"'
        ' fill="#1d7a1d" stroke="#ffffff" stroke-width="1.5"/>'
    )
    parts.append(
        f'<rect x="{sx(problem.goal[0]) - 5:.2f}" y="{sy(problem.goal[1]) - 5:.2f}"'
        ' width="10" height="10" fill="#b02a2a" stroke="#ffffff" stroke-width="1.5"/>'
    )
    parts.append("</svg>")
    try:
        with open(out_path, "w") as fh:
            fh.write("\n".join(parts) + "\n")
    except OSError as err:
        raise OSError(f"could not write SVG to {out_path!r}: {err}") from err
