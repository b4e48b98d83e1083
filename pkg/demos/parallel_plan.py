"""Plan through the parallel-lane scene and draw the route over the surface.

Pedestrians walk along the road, so plain descent threads between them without
ever stalling. The script prints the route and its closest approach.

    python demos/parallel_plan.py --out demo_out
"""

import argparse
from pathlib import Path

from ecas.pipeline import load_bundled, run_pipeline
from ecas.viz import RenderSpec, export_surface, overlay_route


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", default="demo_out")
    args = ap.parse_args()
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    res = run_pipeline(load_bundled("parallel_moving"))
    for t in res.scenario.pedestrians:
        print(f"pedestrian {t.ped_id}: {t.average_speed():.2f} m/s, last seen at ({t.latest.x:.1f}, {t.latest.y:.1f})")

    route = res.route
    print(f"\n{route.termination} in {len(route.waypoints) - 1} steps, {route.length:.1f} m")
    for w in route.waypoints[::5]:
        print(f"  step {w.step_index:3d}  ({w.position.x:6.2f}, {w.position.y:5.2f})  U = {w.potential:.3f}")
    print(f"closest approach to any observed or predicted position: {res.clearance:.2f} m")

    spec = RenderSpec()
    svg = overlay_route(export_surface(res.surface, spec).svg, res.surface, route, res.predictions,
                        res.scenario.pedestrians, spec)
    (out / "parallel_route.svg").write_text(svg)
    print(f"overlay written to {out}/parallel_route.svg")


if __name__ == "__main__":
    main()
