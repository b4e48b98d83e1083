"""Normalized gradient descent on an energy surface with random escape from stalls."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np

from .field import EnergySurface
from .scenario import HalfPlane, PlannerParams, Point2, inside_region

log = logging.getLogger(__name__)

GOAL_REACHED = "GoalReached"
MAX_ITERATIONS = "MaxIterations"

MAX_PERTURB_TRIES = 100
UPHILL_FACTOR = 2.0


class PlannerError(ValueError):
    pass


class PerturbationError(PlannerError):
    pass


class GradientSample(NamedTuple):
    gx: float
    gy: float


class Waypoint(NamedTuple):
    position: Point2
    step_index: int
    perturbed: bool
    potential: float


@dataclass(frozen=True)
class PlannedRoute:
    waypoints: tuple[Waypoint, ...]
    termination: str
    goal: Point2 | None = None

    @property
    def xy(self) -> np.ndarray:
        return np.array([w.position for w in self.waypoints], dtype=float).reshape(-1, 2)

    @property
    def perturbation_count(self) -> int:
        return sum(w.perturbed for w in self.waypoints)

    @property
    def length(self) -> float:
        xy = self.xy
        return float(np.sum(np.hypot(*np.diff(xy, axis=0).T))) if len(xy) > 1 else 0.0


def _capped_step(q, ux: float, uy: float, length: float) -> Point2:
    """q + length * (ux, uy), shortened by ulps until the rounded hop is <= length."""
    nq = Point2(q[0] + length * ux, q[1] + length * uy)
    while math.dist(q, nq) > length:
        length = math.nextafter(length, 0.0)
        nq = Point2(q[0] + length * ux, q[1] + length * uy)
    return nq


def surface_gradient(surface: EnergySurface, x: float, y: float) -> GradientSample:
    """Central difference (step = one cell) of the bilinearly interpolated surface."""
    if not surface.is_interior(x, y):
        raise PlannerError(f"query point ({x:.3f}, {y:.3f}) is outside the grid interior")
    r = surface.resolution
    gx = (surface.interpolate(x + r, y) - surface.interpolate(x - r, y)) / (2 * r)
    gy = (surface.interpolate(x, y + r) - surface.interpolate(x, y - r)) / (2 * r)
    return GradientSample(gx, gy)


def detect_local_minimum(recent: Sequence, goal, params: PlannerParams) -> bool:
    """True if the last ``stall_window`` points span less than ``stall_epsilon``
    while the goal is still out of tolerance."""
    if len(recent) < params.stall_window:
        return False
    pts = np.asarray(recent[-params.stall_window:], dtype=float)
    if math.dist(pts[-1], goal) < params.goal_tolerance:
        return False
    diff = pts[:, None, :] - pts[None, :, :]
    diameter = float(np.sqrt((diff ** 2).sum(-1)).max())
    return diameter < params.stall_epsilon


def perturb(q, rng: np.random.Generator, perturb_radius: float, surface: EnergySurface) -> Point2:
    """Random hop of at most ``perturb_radius`` that stays inside the grid and
    does not land above ``UPHILL_FACTOR`` times the current potential."""
    if perturb_radius == 0:
        return Point2(float(q[0]), float(q[1]))
    u0 = surface.interpolate(q[0], q[1])
    for _ in range(MAX_PERTURB_TRIES):
        theta = rng.uniform(0.0, 2.0 * math.pi)
        rad = rng.uniform(0.0, perturb_radius)
        cx, cy = _capped_step(q, math.cos(theta), math.sin(theta), rad)
        if surface.is_interior(cx, cy) and surface.interpolate(cx, cy) <= UPHILL_FACTOR * u0:
            return Point2(cx, cy)
    raise PerturbationError(f"no acceptable perturbation around ({q[0]:.3f}, {q[1]:.3f}) "
                            f"after {MAX_PERTURB_TRIES} candidates")


def plan(surface: EnergySurface, params: PlannerParams, start, goal,
         boundaries: Sequence[HalfPlane] | None = None, seed: int | None = None) -> PlannedRoute:
    """Descend the surface from ``start`` in fixed ``step_cap`` steps along -grad U.

    Stops once within ``goal_tolerance`` of ``goal`` or after ``max_iterations``
    updates. A stalled window, or a vanishing gradient, triggers a random
    perturbation; the perturbed waypoint is flagged.
    """
    start = Point2(float(start[0]), float(start[1]))
    goal = Point2(float(goal[0]), float(goal[1]))
    if boundaries is not None and not inside_region(boundaries, start):
        raise PlannerError("start is outside the drivable region")
    for label, p in (("start", start), ("goal", goal)):
        if not surface.is_interior(*p):
            raise PlannerError(f"{label} ({p.x}, {p.y}) is outside the grid interior")
    rng = np.random.default_rng(params.rng_seed if seed is None else seed)

    q = start
    route = [Waypoint(q, 0, False, surface.interpolate(*q))]
    recent = [q]
    termination = MAX_ITERATIONS
    for it in range(1, params.max_iterations + 1):
        if math.dist(q, goal) < params.goal_tolerance:
            termination = GOAL_REACHED
            break
        g = surface_gradient(surface, *q)
        norm = math.hypot(g.gx, g.gy)
        stalled = norm == 0.0 or detect_local_minimum(recent, goal, params)
        if stalled:
            nq = perturb(q, rng, params.perturb_radius, surface)
            log.debug("iteration %d: stall at (%.3f, %.3f), perturbed to (%.3f, %.3f)", it, *q, *nq)
        else:
            nq = _capped_step(q, -g.gx / norm, -g.gy / norm, params.step_cap)
            if not surface.is_interior(*nq):
                log.info("iteration %d: descent left the grid interior; stopping", it)
                break
        q = nq
        route.append(Waypoint(q, it, stalled, surface.interpolate(*q)))
        if stalled:
            recent = [q]
        else:
            recent.append(q)
            if len(recent) > params.stall_window:
                recent.pop(0)
    else:
        if math.dist(q, goal) < params.goal_tolerance:
            termination = GOAL_REACHED
    return PlannedRoute(tuple(route), termination, goal)


def route_clearance(route: PlannedRoute, predictions=(), observed=()) -> float:
    """Minimum distance from any waypoint to any observed-latest or predicted point."""
    pts = [t.latest for t in observed]
    for p in predictions:
        pts.extend(pos for _, pos in p.waypoints)
    if not pts or not route.waypoints:
        return math.inf
    a = route.xy
    b = np.asarray(pts, dtype=float)
    d = np.hypot(a[:, None, 0] - b[None, :, 0], a[:, None, 1] - b[None, :, 1])
    return float(d.min())


def route_to_csv(route: PlannedRoute, surface: EnergySurface | None = None) -> str:
    """CSV with a trailing comment carrying termination, goal and (optionally) the
    ``x0,y0,resolution,width,height`` of the surface the route was planned on."""
    lines = ["step,x,y,perturbed,potential"]
    for w in route.waypoints:
        lines.append(f"{w.step_index},{w.position.x!r},{w.position.y!r},{int(w.perturbed)},{w.potential!r}")
    tail = f"# termination={route.termination}"
    if route.goal is not None:
        tail += f" goal={route.goal.x!r},{route.goal.y!r}"
    if surface is not None:
        g = surface.grid
        tail += f" grid={g.origin.x!r},{g.origin.y!r},{g.resolution!r},{g.width},{g.height}"
    lines.append(tail)
    return "\n".join(lines) + "\n"


def route_from_csv(text: str) -> PlannedRoute:
    lines = [ln.strip() for ln in text.splitlines() if ln.strip()]
    if not lines or lines[0] != "step,x,y,perturbed,potential":
        raise ValueError("route CSV must start with header step,x,y,perturbed,potential")
    wps, termination, goal = [], MAX_ITERATIONS, None
    for ln in lines[1:]:
        if ln.startswith("#"):
            for tok in ln[1:].split():
                key, _, val = tok.partition("=")
                if key == "termination":
                    termination = val
                elif key == "goal":
                    gx, gy = val.split(",")
                    goal = Point2(float(gx), float(gy))
            continue
        s, x, y, pert, pot = ln.split(",")
        wps.append(Waypoint(Point2(float(x), float(y)), int(s), pert == "1", float(pot)))
    return PlannedRoute(tuple(wps), termination, goal)


def route_grid_from_csv(text: str):
    """The ``(x0, y0, resolution, width, height)`` recorded by :func:`route_to_csv`, or None."""
    for ln in text.splitlines():
        if ln.startswith("#"):
            for tok in ln[1:].split():
                key, _, val = tok.partition("=")
                if key == "grid":
                    x0, y0, res, w, h = val.split(",")
                    return float(x0), float(y0), float(res), int(w), int(h)
    return None
