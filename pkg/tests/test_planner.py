import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.interpolate import RegularGridInterpolator

from ecas.field import EnergySurface, GridSpec, build_energy_surface, surface_from_function
from ecas.pipeline import load_bundled, predict_scenario, run_pipeline
from ecas.planner import (GOAL_REACHED, MAX_ITERATIONS, PerturbationError, PlannedRoute, PlannerError, Waypoint,
                          detect_local_minimum, perturb, plan, route_clearance, route_from_csv,
                          route_grid_from_csv, route_to_csv, surface_gradient)
from ecas.scenario import FieldParams, PlannerParams, Point2, Scenario

from conftest import empty_world, line_track, rect

GRID = GridSpec.from_extent((0, 10, 0, 8), 0.25)


def test_gradient_constant_and_linear():
    flat = surface_from_function(lambda x, y: 3.0 + 0 * x, GRID)
    assert surface_gradient(flat, 4.1, 3.3) == (0.0, 0.0)
    ramp = surface_from_function(lambda x, y: x + 0 * y, GRID)
    rng = np.random.default_rng(0)
    for _ in range(50):
        x, y = rng.uniform(0.5, 9.5), rng.uniform(0.5, 7.5)
        gx, gy = surface_gradient(ramp, x, y)
        assert gx == pytest.approx(1.0, abs=1e-12) and gy == pytest.approx(0.0, abs=1e-12)


def test_gradient_exact_slope_at_cell_centers():
    ramp = surface_from_function(lambda x, y: 2.5 * x - y, GRID)
    for c in range(2, GRID.width - 2):
        gx, gy = surface_gradient(ramp, GRID.xs[c], GRID.ys[5])
        assert gx == pytest.approx(2.5, abs=1e-12) and gy == pytest.approx(-1.0, abs=1e-12)


def test_gradient_matches_scipy_bilinear_oracle():
    sc = load_bundled("crossing_moving")
    s = build_energy_surface(sc, predict_scenario(sc))
    interp = RegularGridInterpolator((s.grid.ys, s.grid.xs), s.values, method="linear")
    f = lambda x, y: float(interp([[y, x]])[0])
    r = s.resolution
    x0, x1, y0, y1 = s.grid.extent
    rng = np.random.default_rng(1)
    for _ in range(200):
        x, y = rng.uniform(x0 + 1.5 * r, x1 - 1.5 * r), rng.uniform(y0 + 1.5 * r, y1 - 1.5 * r)
        gx, gy = surface_gradient(s, x, y)
        ox = (f(x + r, y) - f(x - r, y)) / (2 * r)
        oy = (f(x, y + r) - f(x, y - r)) / (2 * r)
        assert gx == pytest.approx(ox, rel=1e-9, abs=1e-9)
        assert gy == pytest.approx(oy, rel=1e-9, abs=1e-9)


def test_gradient_outside_interior_raises():
    flat = surface_from_function(lambda x, y: 0 * x, GRID)
    with pytest.raises(PlannerError):
        surface_gradient(flat, 0.2, 4.0)
    with pytest.raises(PlannerError):
        surface_gradient(flat, 5.0, 7.9)


# -- stall detection and perturbation ---------------------------------------------------

P = PlannerParams(stall_window=4, stall_epsilon=0.5)


def test_stall_detection_examples():
    goal = (50.0, 50.0)
    assert detect_local_minimum([(1.0, 1.0)] * 4, goal, P)
    assert not detect_local_minimum([(float(k), 0.0) for k in range(4)], goal, P)
    assert detect_local_minimum([(0.0, 0.0), (0.1, 0.0)] * 2, goal, P)
    assert not detect_local_minimum([(1.0, 1.0)] * 3, goal, P)  # window not yet full
    assert not detect_local_minimum([(49.5, 50.0)] * 4, goal, P)  # goal in tolerance


def bowl():
    return surface_from_function(lambda x, y: (x - 5) ** 2 + (y - 4) ** 2, GRID)


def test_perturb_zero_radius_and_determinism():
    s = bowl()
    q = Point2(5.0, 4.0)
    assert perturb(q, np.random.default_rng(0), 0.0, s) == q
    a = perturb(Point2(3.3, 2.2), np.random.default_rng(7), 1.0, s)
    b = perturb(Point2(3.3, 2.2), np.random.default_rng(7), 1.0, s)
    assert a == b


def test_perturb_from_bowl_minimum_stays_close_and_inside():
    s = surface_from_function(lambda x, y: 1.0 + (x - 5) ** 2 + (y - 4) ** 2, GRID)
    rng = np.random.default_rng(3)
    q = Point2(5.0, 4.0)
    for _ in range(200):
        c = perturb(q, rng, 2.0, s)
        assert math.dist(c, q) <= 2.0
        assert s.is_interior(*c)
        assert s.interpolate(*c) <= 2.0 * s.interpolate(*q)


def test_perturb_gives_up_on_a_pathological_surface():
    vals = np.ones((GRID.height, GRID.width))
    r, c = 10, 10
    vals[r, c] = 0.0
    s = EnergySurface(GRID, vals)
    q = Point2(GRID.xs[c], GRID.ys[r])
    with pytest.raises(PerturbationError):
        perturb(q, np.random.default_rng(0), 0.1, s)


# -- planning -------------------------------------------------------------------------------

def test_start_within_tolerance_returns_start():
    sc = empty_world(goal=(3.0, 5.0))
    route = plan(build_energy_surface(sc), sc.planner_params, sc.start, sc.goal)
    assert route.termination == GOAL_REACHED
    assert [w.position for w in route.waypoints] == [sc.start]


def test_empty_corridor_goes_straight():
    sc = empty_world()
    route = plan(build_energy_surface(sc), sc.planner_params, sc.start, sc.goal, sc.boundaries)
    assert route.termination == GOAL_REACHED
    assert len(route.waypoints) - 1 <= 25
    xs = route.xy[:, 0]
    assert np.all(np.diff(xs) > 0)
    assert np.allclose(route.xy[:, 1], 5.0, atol=1e-9)
    assert math.dist(route.waypoints[-1].position, sc.goal) < 2.0


def test_crossing_seed_42_perturbs_and_reaches_goal():
    res = run_pipeline(load_bundled("crossing_moving"), seed=42)
    assert res.route.termination == GOAL_REACHED
    assert res.route.perturbation_count >= 1


def test_start_outside_region_rejected():
    sc = empty_world()
    s = build_energy_surface(sc)
    with pytest.raises(PlannerError, match="drivable"):
        plan(s, sc.planner_params, (0.5, -0.5), sc.goal, sc.boundaries)
    with pytest.raises(PlannerError, match="interior"):
        plan(s, sc.planner_params, (0.1, 5.0), sc.goal)


def test_zero_gradient_is_treated_as_stall():
    flat = surface_from_function(lambda x, y: 1.0 + 0 * x, GRID)
    route = plan(flat, PlannerParams(max_iterations=5), (2.0, 2.0), (9.0, 7.0))
    assert route.termination == MAX_ITERATIONS
    assert all(w.perturbed for w in route.waypoints[1:])
    assert len(route.waypoints) == 6


def test_max_iterations_bounds_route_length():
    sc = empty_world()
    route = plan(build_energy_surface(sc), PlannerParams(max_iterations=3), sc.start, sc.goal)
    assert route.termination == MAX_ITERATIONS and len(route.waypoints) == 4


def check_contract(route, surface, params, start, goal):
    wps = route.waypoints
    assert wps[0].position == tuple(start) and len(wps) <= params.max_iterations + 1
    for a, b in zip(wps, wps[1:]):
        assert math.dist(a.position, b.position) <= params.step_cap
        if not b.perturbed:
            gx, gy = surface_gradient(surface, *a.position)
            n = math.hypot(gx, gy)
            d = (b.position[0] - a.position[0], b.position[1] - a.position[1])
            dn = math.hypot(*d)
            assert (-gx * d[0] - gy * d[1]) / (n * dn) == pytest.approx(1.0, abs=1e-9)
    if route.termination == GOAL_REACHED:
        assert math.dist(wps[-1].position, goal) < params.goal_tolerance


@pytest.mark.parametrize("name", ["parallel_moving", "crossing_moving", "empty_corridor"])
def test_contract_on_bundled_scenarios(name):
    sc = load_bundled(name)
    for seed in range(3):
        res = run_pipeline(sc, seed=seed)
        check_contract(res.route, res.surface, sc.planner_params, sc.start, sc.goal)


@settings(max_examples=25, deadline=None)
@given(sx=st.floats(1, 29), sy=st.floats(1, 11), gx=st.floats(1, 29), gy=st.floats(1, 11),
       cap=st.floats(0.1, 1.0), seed=st.integers(0, 1000))
def test_empty_world_descent_properties(sx, sy, gx, gy, cap, seed):
    sc = Scenario(rect(0, 30, 0, 12), Point2(sx, sy), Point2(gx, gy), field_params=FieldParams(grid_resolution=0.5),
                  extent=(-2, 32, -2, 14))
    params = PlannerParams(step_cap=cap, perturb_radius=min(1.0, cap), max_iterations=120, rng_seed=seed)
    s = build_energy_surface(sc)
    route = plan(s, params, sc.start, sc.goal, sc.boundaries)
    check_contract(route, s, params, sc.start, sc.goal)
    for a, b in zip(route.waypoints, route.waypoints[1:]):
        if not b.perturbed:
            assert b.potential <= a.potential + 1e-12
    again = plan(s, params, sc.start, sc.goal, sc.boundaries)
    assert again == route


def test_capped_steps_never_exceed_one_metre_over_many_seeds():
    sc = load_bundled("crossing_moving")
    s = build_energy_surface(sc, predict_scenario(sc))
    for seed in range(10):
        route = plan(s, sc.planner_params, sc.start, sc.goal, seed=seed)
        d = np.hypot(*np.diff(route.xy, axis=0).T)
        assert np.all(d <= 1.0)


# -- clearance and CSV ---------------------------------------------------------------------------

def test_clearance_examples():
    route = PlannedRoute((Waypoint(Point2(0, 0), 0, False, 1.0), Waypoint(Point2(1, 0), 1, False, 0.5)),
                         GOAL_REACHED)
    assert route_clearance(route) == math.inf
    ped = line_track(1, (-1.0, 0.0), (2.5, 0.0), 2)  # latest position (0, 0)
    assert route_clearance(route, observed=[ped]) == 0.0


def test_clearance_matches_brute_force():
    res = run_pipeline(load_bundled("parallel_moving"))
    pts = [t.latest for t in res.scenario.pedestrians] + [p for pr in res.predictions for _, p in pr.waypoints]
    brute = min(math.dist(w.position, p) for w in res.route.waypoints for p in pts)
    assert abs(res.clearance - brute) <= 1e-12


def test_route_csv_round_trip():
    res = run_pipeline(load_bundled("crossing_moving"))
    text = route_to_csv(res.route, res.surface)
    assert text.splitlines()[0] == "step,x,y,perturbed,potential"
    assert text.splitlines()[-1].startswith("# termination=GoalReached")
    back = route_from_csv(text)
    assert back == res.route
    g = res.surface.grid
    assert route_grid_from_csv(text) == (g.origin.x, g.origin.y, g.resolution, g.width, g.height)
    assert route_grid_from_csv(route_to_csv(res.route)) is None
