"""Deterministic SVG rendering of point configurations.

Sites are drawn as discs of the core radius so hard-core violations and
bonding structure are visible at a glance.  Dimension one renders as a
horizontal strip.  Output bytes depend only on the inputs.
"""

from __future__ import annotations

from typing import Sequence, Union

import numpy as np

from .geometry import Ball, Box, ColoredConfiguration, GreyConfiguration, Window

DIMENSION_ERROR = "rendering supports dimension 2 at most"

_PLUS_FILL = "#c0392b"
_MINUS_FILL = "#2980b9"
_GREY_FILL = "#8a8a83"
_BACKGROUND = "#fbfaf7"
_OUTLINE = "#3a3a37"

Configuration = Union[GreyConfiguration, ColoredConfiguration]


def _fmt(x: float) -> str:
    out = "%.6g" % float(x)
    return "0" if out == "-0" else out


def _window_bounds(window: Window, a: float) -> tuple[float, float, float, float]:
    if isinstance(window, Ball):
        c = np.asarray(window.center, dtype=np.float64)
        cy = float(c[1]) if window.dimension == 2 else 0.0
        r = window.radius
        return float(c[0]) - r, float(c[0]) + r, cy - r, cy + r
    lo = np.asarray(window.lower, dtype=np.float64)
    hi = np.asarray(window.upper, dtype=np.float64)
    if window.dimension == 2:
        return float(lo[0]), float(hi[0]), float(lo[1]), float(hi[1])
    return float(lo[0]), float(hi[0]), -a, a


def render_svg(
    config: Configuration,
    a: float,
    windows: Window | Sequence[Window] | None = None,
    width: float = 640.0,
) -> str:
    """Render one configuration, outlining any given windows."""
    d = config.dimension
    if d > 2:
        raise ValueError(DIMENSION_ERROR)
    if windows is None:
        wins: list[Window] = []
    elif isinstance(windows, (Ball, Box)):
        wins = [windows]
    else:
        wins = list(windows)
    pts = np.asarray(config.points, dtype=np.float64).reshape(config.n, d)
    if d == 1:
        pts = np.column_stack([pts[:, 0], np.zeros(config.n)])

    xs: list[float] = []
    ys: list[float] = []
    if config.n:
        xs += [float(pts[:, 0].min() - a), float(pts[:, 0].max() + a)]
        ys += [float(pts[:, 1].min() - a), float(pts[:, 1].max() + a)]
    for w in wins:
        wx0, wx1, wy0, wy1 = _window_bounds(w, a)
        xs += [wx0, wx1]
        ys += [wy0, wy1]
    if not xs:
        xs = [-1.0, 1.0]
    if not ys:
        ys = [-a if a > 0 else -1.0, a if a > 0 else 1.0]
    pad = 0.05 * max(max(xs) - min(xs), max(ys) - min(ys), 1e-9)
    x0, x1 = min(xs) - pad, max(xs) + pad
    y0, y1 = min(ys) - pad, max(ys) + pad
    span_x = x1 - x0
    span_y = y1 - y0
    height = width * span_y / span_x

    def px(x: float) -> float:
        return (x - x0) / span_x * width

    def py(y: float) -> float:
        # flip so larger model y sits higher in the image
        return (y1 - y) / span_y * height

    r_px = a / span_x * width
    parts = [
        '<svg xmlns="http://www.w3.org/2000/svg" viewBox="0 0 %s %s">' % (_fmt(width), _fmt(height)),
        '<rect x="0" y="0" width="%s" height="%s" fill="%s"/>' % (_fmt(width), _fmt(height), _BACKGROUND),
    ]
    if d == 1:
        parts.append(
            '<line x1="0" y1="%s" x2="%s" y2="%s" stroke="%s" stroke-width="1"/>'
            % (_fmt(py(0.0)), _fmt(width), _fmt(py(0.0)), _OUTLINE)
        )
    for w in wins:
        if isinstance(w, Ball):
            c = np.asarray(w.center, dtype=np.float64)
            cy = float(c[1]) if w.dimension == 2 else 0.0
            parts.append(
                '<circle cx="%s" cy="%s" r="%s" fill="none" stroke="%s" stroke-width="1.5"/>'
                % (_fmt(px(float(c[0]))), _fmt(py(cy)), _fmt(w.radius / span_x * width), _OUTLINE)
            )
        else:
            wx0, wx1, wy0, wy1 = _window_bounds(w, a)
            parts.append(
                '<rect x="%s" y="%s" width="%s" height="%s" fill="none" stroke="%s" stroke-width="1.5"/>'
                % (
                    _fmt(px(wx0)),
                    _fmt(py(wy1)),
                    _fmt((wx1 - wx0) / span_x * width),
                    _fmt((wy1 - wy0) / span_y * height),
                    _OUTLINE,
                )
            )
    spins = config.spins if isinstance(config, ColoredConfiguration) else None
    for i in range(config.n):
        if spins is None:
            fill = _GREY_FILL
        else:
            fill = _PLUS_FILL if int(spins[i]) > 0 else _MINUS_FILL
        parts.append(
            '<circle cx="%s" cy="%s" r="%s" fill="%s" fill-opacity="0.75" stroke="%s" stroke-width="0.5"/>'
            % (_fmt(px(float(pts[i, 0]))), _fmt(py(float(pts[i, 1]))), _fmt(r_px), fill, _OUTLINE)
        )
    parts.append("</svg>")
    return "\n".join(parts) + "\n"
