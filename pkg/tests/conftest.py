import math

import pytest

from ecas.scenario import FieldParams, HalfPlane, PedestrianTrack, Point2, Scenario


def rect(x0, x1, y0, y1):
    return [HalfPlane(1, 0, -x0), HalfPlane(-1, 0, x1), HalfPlane(0, 1, -y0), HalfPlane(0, -1, y1)]


def line_track(pid, start, velocity, n, dt=0.4, frame_step=10):
    """Straight walker: ``n`` frames from ``start`` moving ``velocity`` m/s."""
    return PedestrianTrack(pid, tuple(
        (k * frame_step, Point2(start[0] + velocity[0] * dt * k, start[1] + velocity[1] * dt * k))
        for k in range(n)), dt)


def empty_world(width=20.0, height=10.0, start=(2.0, 5.0), goal=(18.0, 5.0), resolution=0.5, **fp):
    return Scenario(rect(0, width, 0, height), Point2(*start), Point2(*goal),
                    field_params=FieldParams(grid_resolution=resolution, **fp))


@pytest.fixture
def corridor():
    return empty_world()


def scalar_total(x, y, goal, boundaries, obstacles, fp):
    """Pure-python evaluation of the three potential terms, one point at a time."""
    att = fp.h * math.sqrt((x - goal[0]) ** 2 + (y - goal[1]) ** 2)
    s = 0.0
    for hp in boundaries:
        g = hp.a * x + hp.b * y + hp.c
        s += g + abs(g)
    bnd = 1.0 / (fp.alpha + s)
    obs = 0.0
    if obstacles:
        d = min(math.sqrt((x - o.position[0]) ** 2 + (y - o.position[1]) ** 2) / o.weight for o in obstacles)
        if d <= fp.q_star:
            d = max(d, 0.05 * fp.q_star)
            obs = (1.0 / (2.0 * fp.delta)) * (1.0 / d - 1.0 / fp.q_star) ** 2
    return att, bnd, obs


# -- acceptance report ------------------------------------------------------------------

ACCEPTANCE_LINES = []


@pytest.fixture
def criterion():
    """Record one PASS/FAIL line per acceptance criterion, then assert it."""
    def record(number, ok, detail):
        ACCEPTANCE_LINES.append(f"criterion {number}: {'PASS' if ok else 'FAIL'}  {detail}")
        assert ok, detail
    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":").split(".")[0])):
            terminalreporter.write_line(line)
