"""Show the planner stalling in front of a slow crowd and shaking itself free.

In the crossing scene a knot of slow walkers sits on the riding line. Descent
runs into the dip in front of them, the stall detector fires, and a random hop
lets it slide around. Each seed takes a different detour.

    python demos/crossing_escape.py --seeds 42 1 2 3 4 --out demo_out
"""

import argparse
from pathlib import Path

from ecas.field import build_energy_surface
from ecas.pipeline import load_bundled, predict_scenario
from ecas.planner import plan, route_clearance
from ecas.viz import RenderSpec, export_surface, overlay_route


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--seeds", type=int, nargs="+", default=[42, 1, 2, 3, 4])
    ap.add_argument("--out", default="demo_out")
    args = ap.parse_args()
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    sc = load_bundled("crossing_moving")
    preds = predict_scenario(sc)
    surface = build_energy_surface(sc, preds)  # one surface, many seeded runs

    base = export_surface(surface, RenderSpec()).svg
    for seed in args.seeds:
        route = plan(surface, sc.planner_params, sc.start, sc.goal, sc.boundaries, seed=seed)
        kicks = [w for w in route.waypoints if w.perturbed]
        print(f"seed {seed:3d}: {route.termination:13s} {len(route.waypoints) - 1:3d} steps, "
              f"{len(kicks)} perturbation(s), clearance {route_clearance(route, preds, sc.pedestrians):.2f} m")
        for w in kicks:
            print(f"           stalled near ({w.position.x:.2f}, {w.position.y:.2f}) at step {w.step_index}")
        svg = overlay_route(base, surface, route, preds, sc.pedestrians)
        (out / f"crossing_seed{seed}.svg").write_text(svg)
    print(f"overlays written to {out}/crossing_seed*.svg (yellow dots mark perturbed waypoints)")


if __name__ == "__main__":
    main()
