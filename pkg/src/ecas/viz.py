"""Heatmap export of energy surfaces (PGM + SVG) and SVG route overlays."""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .field import EnergySurface

log = logging.getLogger(__name__)

# viridis anchors: low energy dark blue, high energy yellow
PALETTE = np.array([(68, 1, 84), (59, 82, 139), (33, 145, 140), (94, 201, 98), (253, 231, 37)], dtype=float)


@dataclass(frozen=True)
class RenderSpec:
    color_scale: str = "log"
    value_clip: float | None = None
    component: str = "total"  # total | att | rep
    cell_px: int = 4
    start_color: str = "red"
    goal_color: str = "green"
    indirect_color: str = "yellow"
    observed_color: str = "white"
    predicted_color: str = "orange"

    def __post_init__(self):
        if self.color_scale not in ("log", "linear"):
            raise ValueError("color_scale must be 'log' or 'linear'")
        if self.value_clip is not None and not self.value_clip > 0:
            raise ValueError("value_clip must be positive")
        if self.component not in ("total", "att", "rep"):
            raise ValueError("component must be total, att or rep")
        if self.cell_px < 1:
            raise ValueError("cell_px must be >= 1")


class RenderedSurface(NamedTuple):
    pixels: np.ndarray  # uint8, row 0 = top of the image (largest y)
    pgm: str
    svg: str


def component_values(surface: EnergySurface, component: str) -> np.ndarray:
    if component == "total":
        return surface.values
    arr = surface.u_att if component == "att" else surface.u_rep
    if arr is None:
        raise ValueError(f"surface has no '{component}' component grid")
    return arr


def to_pixels(values: np.ndarray, spec: RenderSpec) -> np.ndarray:
    """Monotone map of grid values to 0..255, flipped so north is up."""
    v = np.asarray(values, dtype=float)
    if spec.value_clip is not None:
        v = np.minimum(v, spec.value_clip)
    lo, hi = float(v.min()), float(v.max())
    if hi <= lo:
        log.warning("constant surface; rendering a uniform image")
        norm = np.zeros_like(v)
    elif spec.color_scale == "log":
        norm = np.log1p(v - lo) / np.log1p(hi - lo)
    else:
        norm = (v - lo) / (hi - lo)
    return np.round(255.0 * norm).astype(np.uint8)[::-1]


def pgm_document(pixels: np.ndarray) -> str:
    h, w = pixels.shape
    rows = [" ".join(str(int(p)) for p in row) for row in pixels]
    return f"P2\n{w} {h}\n255\n" + "\n".join(rows) + "\n"


def parse_pgm(text: str) -> np.ndarray:
    tokens = [t for ln in text.splitlines() if not ln.startswith("#") for t in ln.split()]
    if not tokens or tokens[0] != "P2":
        raise ValueError("not a P2 PGM document")
    w, h, maxval = int(tokens[1]), int(tokens[2]), int(tokens[3])
    pixels = np.array(tokens[4:4 + w * h], dtype=int)
    if pixels.size != w * h or pixels.min(initial=0) < 0 or pixels.max(initial=0) > maxval:
        raise ValueError("PGM pixel data does not match its header")
    return pixels.reshape(h, w)


def _rgb(level: int) -> str:
    t = level / 255.0 * (len(PALETTE) - 1)
    k = min(int(t), len(PALETTE) - 2)
    c = PALETTE[k] + (t - k) * (PALETTE[k + 1] - PALETTE[k])
    return "#%02x%02x%02x" % tuple(int(round(x)) for x in c)


def world_to_image(surface: EnergySurface, x: float, y: float, cell_px: int = 4) -> tuple[float, float]:
    """SVG coordinates of a world point; y grows downward in the image."""
    g = surface.grid
    top = g.origin.y + g.height * g.resolution
    return (x - g.origin.x) / g.resolution * cell_px, (top - y) / g.resolution * cell_px


def image_to_world(surface: EnergySurface, px: float, py: float, cell_px: int = 4) -> tuple[float, float]:
    g = surface.grid
    top = g.origin.y + g.height * g.resolution
    return g.origin.x + px / cell_px * g.resolution, top - py / cell_px * g.resolution


def svg_document(pixels: np.ndarray, spec: RenderSpec) -> str:
    h, w = pixels.shape
    s = spec.cell_px
    out = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{w * s}" height="{h * s}" '
        f'viewBox="0 0 {w * s} {h * s}">',
        '<g id="surface" shape-rendering="crispEdges">',
    ]
    for r in range(h):
        row = pixels[r]
        c0 = 0
        # merge horizontal runs of equal level to keep documents small
        for c in range(1, w + 1):
            if c == w or row[c] != row[c0]:
                out.append(f'<rect x="{c0 * s}" y="{r * s}" width="{(c - c0) * s}" height="{s}" '
                           f'fill="{_rgb(int(row[c0]))}"/>')
                c0 = c
    out.append("</g>")
    out.append("</svg>")
    return "\n".join(out) + "\n"


def export_surface(surface: EnergySurface, spec: RenderSpec = RenderSpec()) -> RenderedSurface:
    pixels = to_pixels(component_values(surface, spec.component), spec)
    return RenderedSurface(pixels, pgm_document(pixels), svg_document(pixels, spec))


def _fmt(v: float) -> str:
    return repr(float(v))


def overlay_route(base_svg: str, surface: EnergySurface, route=None, predictions=(), observed=(),
                  spec: RenderSpec = RenderSpec(), start=None, goal=None) -> str:
    """Append route, pedestrian and start/goal layers to a surface SVG.

    Perturbed waypoints are drawn as the "indirect point" markers. Predicted
    pedestrian paths are dashed; observed histories are solid.
    """
    s = spec.cell_px
    g = surface.grid
    x0, x1, y0, y1 = g.extent

    def tf(p, label):
        if not (x0 <= p[0] <= x1 and y0 <= p[1] <= y1):
            raise ValueError(f"{label} ({p[0]:.3f}, {p[1]:.3f}) lies outside the surface grid")
        px, py = world_to_image(surface, p[0], p[1], s)
        return f"{_fmt(px)},{_fmt(py)}"

    wps = list(route.waypoints) if route is not None else []
    if start is None and wps:
        start = wps[0].position
    if goal is None and route is not None:
        goal = route.goal

    layers = ['<g id="overlay">']
    for t in observed:
        pts = " ".join(tf(p, f"pedestrian {t.ped_id}") for p in t.positions)
        layers.append(f'<polyline class="observed" data-ped="{t.ped_id}" points="{pts}" fill="none" '
                      f'stroke="{spec.observed_color}" stroke-width="1.5"/>')
    for pr in predictions:
        pts = " ".join(tf(p, f"pedestrian {pr.ped_id}") for _, p in pr.waypoints)
        layers.append(f'<polyline class="predicted" data-ped="{pr.ped_id}" points="{pts}" fill="none" '
                      f'stroke="{spec.predicted_color}" stroke-width="1.5" stroke-dasharray="4,2"/>')
    if wps:
        pts = " ".join(tf(w.position, f"waypoint {w.step_index}") for w in wps)
        layers.append(f'<polyline id="route" points="{pts}" fill="none" stroke="black" stroke-width="1.5"/>')
        for w in wps:
            if w.perturbed:
                cx, cy = tf(w.position, f"waypoint {w.step_index}").split(",")
                layers.append(f'<circle class="indirect" cx="{cx}" cy="{cy}" r="{s}" '
                              f'fill="{spec.indirect_color}" stroke="black"/>')
    for cls, p, color in (("start", start, spec.start_color), ("goal", goal, spec.goal_color)):
        if p is not None:
            cx, cy = tf(p, cls).split(",")
            layers.append(f'<circle class="{cls}" cx="{cx}" cy="{cy}" r="{1.5 * s}" fill="{color}" stroke="black"/>')
    layers.append("</g>")

    head, sep, _ = base_svg.rpartition("</svg>")
    if not sep:
        raise ValueError("base image is not an SVG document")
    return head + "\n".join(layers) + "\n</svg>\n"
