"""Regenerate the bundled scenario files and the synthetic trajectory sample.

Pedestrian histories are straight lines sampled every 0.4 s whose average speed
equals the listed value. Geometry (lanes, start, goal) is synthetic.

    python tools/make_scenarios.py
"""

import json
import math
from pathlib import Path

import numpy as np

OUT = Path(__file__).resolve().parents[1] / "src" / "ecas" / "data"
DT = 0.4
OBS = 8


def rectangle(x0, x1, y0, y1):
    return [{"a": 1.0, "b": 0.0, "c": -x0}, {"a": -1.0, "b": 0.0, "c": x1},
            {"a": 0.0, "b": 1.0, "c": -y0}, {"a": 0.0, "b": -1.0, "c": y1}]


def straight(pid, latest, heading_deg, speed, n=OBS):
    """History of ``n`` frames ending at ``latest`` moving along ``heading_deg``."""
    th = math.radians(heading_deg)
    step = speed * DT
    frames = []
    for k in range(n):
        back = (n - 1 - k) * step
        x = latest[0] - back * math.cos(th)
        y = latest[1] - back * math.sin(th)
        frames.append([k * 10, round(x, 6), round(y, 6)])
    return {"id": pid, "frame_interval": DT, "frames": frames}


def parallel_moving():
    # (latest position, heading, speed): lanes either side of the riding line y = 5
    peds = [
        ((11.0, 2.0), 0.0, 2.79),
        ((30.0, 8.0), 180.0, 0.52),
        ((12.0, 7.5), 0.0, 0.71),
        ((33.0, 2.5), 180.0, 1.97),
        ((20.0, 8.5), 0.0, 1.67),
        ((22.0, 3.2), 180.0, 1.55),
    ]
    return {
        "name": "parallel_moving",
        "boundaries": rectangle(0.0, 40.0, 0.0, 10.0),
        "extent": {"xmin": -4.0, "xmax": 44.0, "ymin": -4.0, "ymax": 14.0},
        "start": {"x": 3.0, "y": 5.0},
        "goal": {"x": 37.0, "y": 5.0},
        "pedestrians": [straight(i + 1, *p) for i, p in enumerate(peds)],
        "field_params": {"h": 1.0, "alpha": 0.1, "q_star": 2.0, "delta": 0.5,
                         "grid_resolution": 0.25, "gamma": 0.9},
        "planner_params": {"max_iterations": 400, "step_cap": 1.0, "goal_tolerance": 2.0,
                           "stall_window": 10, "stall_epsilon": 1.5, "perturb_radius": 1.0,
                           "rng_seed": 42},
    }


def crossing_moving():
    # ids follow the listed speeds; pedestrians 2, 3, 5, 6 and 8 form a slow cluster on
    # the riding line y = 6 near x = 19-22, the rest have already crossed the line or
    # will not reach it within the prediction horizon
    peds = [
        ((8.0, 7.5), 90.0, 0.72),
        ((22.0, 10.0), 270.0, 0.73),
        ((22.0, 3.0), 90.0, 0.45),
        ((29.0, 4.6), 270.0, 0.90),
        ((19.0, 6.6), 270.0, 0.17),
        ((19.0, 5.5), 90.0, 0.27),
        ((31.0, 7.3), 90.0, 1.35),
        ((19.6, 6.0), 90.0, 0.19),
        ((12.0, 11.0), 270.0, 0.46),
        ((25.0, 1.5), 80.0, 0.54),
    ]
    return {
        "name": "crossing_moving",
        "boundaries": rectangle(0.0, 40.0, 0.0, 12.0),
        "extent": {"xmin": -4.0, "xmax": 44.0, "ymin": -4.0, "ymax": 16.0},
        "start": {"x": 3.0, "y": 6.0},
        "goal": {"x": 37.0, "y": 6.0},
        "pedestrians": [straight(i + 1, *p) for i, p in enumerate(peds)],
        "field_params": {"h": 1.0, "alpha": 0.1, "q_star": 2.0, "delta": 0.5,
                         "grid_resolution": 0.25, "gamma": 0.9},
        "planner_params": {"max_iterations": 400, "step_cap": 1.0, "goal_tolerance": 2.0,
                           "stall_window": 10, "stall_epsilon": 1.5, "perturb_radius": 1.0,
                           "rng_seed": 42},
    }


def empty_corridor():
    return {
        "name": "empty_corridor",
        "boundaries": rectangle(0.0, 20.0, 0.0, 10.0),
        "start": {"x": 2.0, "y": 5.0},
        "goal": {"x": 18.0, "y": 5.0},
        "pedestrians": [],
        "field_params": {"grid_resolution": 0.5},
    }


def synthetic_sample(n_tracks=50, seed=7):
    """Smoothly turning walkers, 20-30 frames each, frame ids stepping by 10."""
    rng = np.random.default_rng(seed)
    rows = []
    for pid in range(1, n_tracks + 1):
        n = int(rng.integers(20, 31))
        f0 = int(rng.integers(0, 40)) * 10
        pos = rng.uniform([0, 0], [15, 12])
        heading = rng.uniform(0, 2 * np.pi)
        speed = rng.uniform(0.6, 1.8)
        turn = rng.normal(0, 0.05)
        for k in range(n):
            rows.append((f0 + 10 * k, pid, pos[0], pos[1]))
            heading += turn + rng.normal(0, 0.03)
            pos = pos + speed * DT * np.array([np.cos(heading), np.sin(heading)])
    rows.sort()
    lines = ["# synthetic pedestrian tracks: frame_id ped_id x y (metres, 0.4 s per 10 frames)"]
    lines += [f"{f} {p} {x:.4f} {y:.4f}" for f, p, x, y in rows]
    return "\n".join(lines) + "\n"


def main():
    OUT.mkdir(parents=True, exist_ok=True)
    for make in (parallel_moving, crossing_moving, empty_corridor):
        doc = make()
        (OUT / f"{doc['name']}.json").write_text(json.dumps(doc, indent=2) + "\n")
    (OUT / "synthetic_eth_sample.txt").write_text(synthetic_sample())


if __name__ == "__main__":
    main()
