"""Artificial potential field and its rasterization into an energy surface.

The total potential is ``U = U_att + U_bnd + U_obs``:

* ``U_att(q) = h * |q - goal|`` -- a conic well, zero at the goal.
* ``U_bnd(q) = 1 / (alpha + sum_i (g_i(q) + |g_i(q)|))`` over the half-planes
  ``g_i(q) = a_i x + b_i y + c_i >= 0`` that bound the drivable region.
* ``U_obs(q) = (1 / (2 delta)) * (1/D - 1/q_star)**2`` for ``D <= q_star``, else 0,
  with ``D`` the weighted distance to the closest obstacle point.

Every function accepts scalars or numpy arrays for the query coordinates.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .scenario import HalfPlane, Point2, Scenario

# Distances below this fraction of q_star are clamped, which caps U_obs.
CLAMP_FRACTION = 0.05


class GridCoverageError(ValueError):
    pass


@dataclass(frozen=True)
class ObstaclePoint:
    position: Point2
    time_offset: float = 0.0
    weight: float = 1.0
    ped_id: int | None = None

    def __post_init__(self):
        if not 0 < self.weight <= 1:
            raise ValueError("obstacle weight must be in (0, 1]")


def attractive_potential(x, y, goal, h: float):
    return h * np.hypot(np.subtract(x, goal[0]), np.subtract(y, goal[1]))


def boundary_repulsion(x, y, boundaries: Sequence[HalfPlane], alpha: float):
    total = np.zeros(np.broadcast(np.asarray(x), np.asarray(y)).shape)
    for hp in boundaries:
        g = hp(np.asarray(x, dtype=float), np.asarray(y, dtype=float))
        total = total + (g + np.abs(g))
    out = 1.0 / (alpha + total)
    return out if out.ndim else float(out)


def repulsion_ceiling(q_star: float, delta: float) -> float:
    return (1.0 / (2.0 * delta)) * (1.0 / (CLAMP_FRACTION * q_star) - 1.0 / q_star) ** 2


def weighted_distance(x, y, obstacles: Sequence[ObstaclePoint]):
    """min over obstacles of |q - p_k| / w_k; +inf when there are no obstacles."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    d = np.full(np.broadcast(x, y).shape, np.inf)
    for ob in obstacles:
        d = np.minimum(d, np.hypot(x - ob.position[0], y - ob.position[1]) / ob.weight)
    return d


def obstacle_repulsion(x, y, obstacles: Sequence[ObstaclePoint], q_star: float, delta: float):
    d = weighted_distance(x, y, obstacles)
    dc = np.maximum(d, CLAMP_FRACTION * q_star)
    with np.errstate(divide="ignore"):
        u = np.where(d <= q_star, (1.0 / (2.0 * delta)) * (1.0 / dc - 1.0 / q_star) ** 2, 0.0)
    return u if u.ndim else float(u)


def total_potential(x, y, goal, boundaries, obstacles, params):
    """Sum of the three terms; ``params`` is a :class:`~ecas.scenario.FieldParams`."""
    return (attractive_potential(x, y, goal, params.h)
            + boundary_repulsion(x, y, boundaries, params.alpha)
            + obstacle_repulsion(x, y, obstacles, params.q_star, params.delta))


@dataclass(frozen=True)
class GridSpec:
    """Regular grid of square cells; values live at cell centers."""

    origin: Point2  # lower-left corner of cell (0, 0)
    resolution: float
    width: int
    height: int

    @classmethod
    def from_extent(cls, extent, resolution: float) -> "GridSpec":
        x0, x1, y0, y1 = extent
        w = int(round((x1 - x0) / resolution))
        h = int(round((y1 - y0) / resolution))
        if w < 3 or h < 3:
            raise GridCoverageError(f"grid of {w}x{h} cells is too small; need at least 3x3")
        return cls(Point2(float(x0), float(y0)), float(resolution), w, h)

    @property
    def xs(self) -> np.ndarray:
        return self.origin.x + (np.arange(self.width) + 0.5) * self.resolution

    @property
    def ys(self) -> np.ndarray:
        return self.origin.y + (np.arange(self.height) + 0.5) * self.resolution

    def mesh(self):
        return np.meshgrid(self.xs, self.ys)  # shapes (height, width)

    @property
    def extent(self):
        return (self.origin.x, self.origin.x + self.width * self.resolution,
                self.origin.y, self.origin.y + self.height * self.resolution)

    def cell_of(self, x, y) -> tuple[int, int]:
        """(row, col) of the cell containing a world point."""
        col = int(math.floor((x - self.origin.x) / self.resolution))
        row = int(math.floor((y - self.origin.y) / self.resolution))
        return row, col


@dataclass(frozen=True, eq=False)
class EnergySurface:
    grid: GridSpec
    values: np.ndarray  # (height, width), row 0 at the lowest y
    u_att: np.ndarray | None = None
    u_rep: np.ndarray | None = None

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.shape != (self.grid.height, self.grid.width):
            raise ValueError(f"values shape {v.shape} does not match grid {(self.grid.height, self.grid.width)}")
        if not np.all(np.isfinite(v)):
            raise ValueError("surface values must be finite")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def origin(self):
        return self.grid.origin

    @property
    def resolution(self):
        return self.grid.resolution

    @property
    def width(self):
        return self.grid.width

    @property
    def height(self):
        return self.grid.height

    def interpolate(self, x: float, y: float) -> float:
        """Bilinear interpolation between cell centers (clamped at the outer centers)."""
        g = self.grid
        u = (x - g.origin.x) / g.resolution - 0.5
        v = (y - g.origin.y) / g.resolution - 0.5
        u = min(max(u, 0.0), g.width - 1.0)
        v = min(max(v, 0.0), g.height - 1.0)
        i0 = min(int(math.floor(u)), g.width - 2)
        j0 = min(int(math.floor(v)), g.height - 2)
        fu, fv = u - i0, v - j0
        z = self.values
        return float((1 - fv) * ((1 - fu) * z[j0, i0] + fu * z[j0, i0 + 1])
                     + fv * ((1 - fu) * z[j0 + 1, i0] + fu * z[j0 + 1, i0 + 1]))

    def is_interior(self, x: float, y: float) -> bool:
        """True if q +/- one cell stays within the span of cell centers."""
        xs0, xs1 = self.grid.origin.x + 1.5 * self.resolution, self.grid.origin.x + (self.width - 1.5) * self.resolution
        ys0, ys1 = self.grid.origin.y + 1.5 * self.resolution, self.grid.origin.y + (self.height - 1.5) * self.resolution
        return xs0 <= x <= xs1 and ys0 <= y <= ys1


def rasterize(func, grid: GridSpec) -> np.ndarray:
    """Evaluate a vectorized scalar field at every cell center."""
    X, Y = grid.mesh()
    return np.asarray(func(X, Y), dtype=float) * np.ones((grid.height, grid.width))


def surface_from_function(func, grid: GridSpec) -> EnergySurface:
    return EnergySurface(grid, rasterize(func, grid))


def obstacles_from(scenario: Scenario, predictions=(), gamma: float | None = None) -> list[ObstaclePoint]:
    """Latest observed positions (weight 1) plus time-decayed predicted waypoints."""
    gamma = scenario.field_params.gamma if gamma is None else gamma
    obs = [ObstaclePoint(t.latest, 0.0, 1.0, t.ped_id) for t in scenario.pedestrians]
    intervals = {t.ped_id: t.frame_interval for t in scenario.pedestrians}
    for pred in predictions:
        dt = intervals.get(pred.ped_id, pred.frame_interval)
        for t_off, p in pred.waypoints:
            obs.append(ObstaclePoint(p, t_off, gamma ** (t_off / dt), pred.ped_id))
    return obs


def build_energy_surface(scenario: Scenario, predictions=(), gamma: float | None = None) -> EnergySurface:
    """Rasterize the total potential of a scenario and its pedestrian predictions.

    The grid spans ``scenario.grid_extent()`` at ``field_params.grid_resolution``.
    Start, goal and every obstacle point must lie at least ``q_star`` inside the grid.
    """
    fp = scenario.field_params
    grid = GridSpec.from_extent(scenario.grid_extent(), fp.grid_resolution)
    obstacles = obstacles_from(scenario, predictions, gamma)
    x0, x1, y0, y1 = grid.extent

    def check(label, p, margin):
        m = min(p[0] - x0, x1 - p[0], p[1] - y0, y1 - p[1])
        if m < margin:
            raise GridCoverageError(
                f"{label} at ({p[0]:.3f}, {p[1]:.3f}) is {m:.3f} m from the grid edge; need >= {margin}")

    check("start", scenario.start, 0.0)
    check("goal", scenario.goal, 0.0)
    for ob in obstacles:
        label = f"pedestrian {ob.ped_id} at t={ob.time_offset:g}s"
        check(label, ob.position, fp.q_star)

    X, Y = grid.mesh()
    u_att = attractive_potential(X, Y, scenario.goal, fp.h)
    u_bnd = boundary_repulsion(X, Y, scenario.boundaries, fp.alpha)
    u_obs = obstacle_repulsion(X, Y, obstacles, fp.q_star, fp.delta)
    u_rep = u_bnd + u_obs
    return EnergySurface(grid, u_att + u_rep, u_att=u_att, u_rep=u_rep)


# -- CSV export --------------------------------------------------------------

def surface_to_csv(surface: EnergySurface) -> str:
    g = surface.grid
    att = surface.u_att if surface.u_att is not None else np.zeros_like(surface.values)
    rep = surface.u_rep if surface.u_rep is not None else surface.values - att
    lines = ["x,y,u_total,u_att,u_rep"]
    xs, ys = g.xs, g.ys
    for j in range(g.height):
        for i in range(g.width):
            lines.append(",".join(repr(float(v)) for v in
                                  (xs[i], ys[j], surface.values[j, i], att[j, i], rep[j, i])))
    return "\n".join(lines) + "\n"


def surface_from_csv(text: str) -> EnergySurface:
    """Rebuild a surface from :func:`surface_to_csv` output (row-major, x fastest)."""
    rows = [ln for ln in text.splitlines() if ln.strip() and not ln.startswith("#")]
    if not rows or rows[0].replace(" ", "") != "x,y,u_total,u_att,u_rep":
        raise ValueError("surface CSV must start with header x,y,u_total,u_att,u_rep")
    data = np.array([[float(v) for v in r.split(",")] for r in rows[1:]])
    if data.ndim != 2 or data.shape[1] != 5:
        raise ValueError("surface CSV rows must have 5 columns")
    xs = np.unique(data[:, 0])
    ys = np.unique(data[:, 1])
    w, h = len(xs), len(ys)
    if w * h != len(data) or w < 3 or h < 3:
        raise ValueError(f"surface CSV is not a complete grid ({len(data)} rows for {w}x{h})")
    res = (xs[-1] - xs[0]) / (w - 1)
    grid = GridSpec(Point2(xs[0] - 0.5 * res, ys[0] - 0.5 * res), float(res), w, h)
    vals = data[:, 2:].reshape(h, w, 3)
    return EnergySurface(grid, vals[..., 0].copy(), u_att=vals[..., 1].copy(), u_rep=vals[..., 2].copy())
