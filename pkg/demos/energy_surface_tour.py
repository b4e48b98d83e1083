"""Walk through the pieces of an energy surface for the bundled parallel-lane scene.

Prints how much of the grid each term influences and writes one heatmap per
component (attractive, repulsive, total) into the output directory.

    python demos/energy_surface_tour.py --out demo_out
"""

import argparse
from pathlib import Path

import numpy as np

from ecas.field import build_energy_surface, obstacle_repulsion, obstacles_from, repulsion_ceiling
from ecas.pipeline import load_bundled, predict_scenario
from ecas.viz import RenderSpec, export_surface


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--scenario", default="parallel_moving")
    ap.add_argument("--out", default="demo_out")
    args = ap.parse_args()
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    sc = load_bundled(args.scenario)
    preds = predict_scenario(sc)
    surface = build_energy_surface(sc, preds)
    fp = sc.field_params
    g = surface.grid
    print(f"{sc.name}: {g.width} x {g.height} cells at {g.resolution} m, extent {g.extent}")

    obs = obstacles_from(sc, preds)
    print(f"{len(sc.pedestrians)} pedestrians -> {len(obs)} obstacle points "
          f"(weights from {min(o.weight for o in obs):.3f} to 1)")

    X, Y = g.mesh()
    obstacle_part = obstacle_repulsion(X, Y, obs, fp.q_star, fp.delta)
    touched = np.count_nonzero(obstacle_part) / obstacle_part.size
    print(f"obstacle term non-zero on {100 * touched:.1f}% of cells; ceiling {repulsion_ceiling(fp.q_star, fp.delta):.1f}")
    print(f"attractive term spans {surface.u_att.min():.2f} .. {surface.u_att.max():.2f}")
    print(f"total spans {surface.values.min():.2f} .. {surface.values.max():.2f}")

    for comp in ("att", "rep", "total"):
        img = export_surface(surface, RenderSpec(component=comp))
        (out / f"tour_{comp}.pgm").write_text(img.pgm)
        (out / f"tour_{comp}.svg").write_text(img.svg)
    print(f"heatmaps written to {out}/tour_*.pgm|svg")


if __name__ == "__main__":
    main()
