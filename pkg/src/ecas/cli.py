"""Command-line entry point: ``ecas {predict,plan,render,train}``.

Exit status is 0 on success (and, for ``plan``, only when the goal is reached),
1 for usage or input errors, and 2 when the planner runs out of iterations.
Set ``ECAS_LOG`` to ``error``, ``warning``, ``info`` or ``debug`` for logging.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import os
import sys
import time
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from . import pipeline
from .field import surface_from_csv, surface_to_csv
from .planner import GOAL_REACHED, route_from_csv, route_grid_from_csv, route_to_csv
from .prediction import (PredictedTrajectory, SrLstmModel, fad, mad, model_from_json, model_to_json,
                         predict_constant_velocity, predict_srlstm, train_desk_scale)
from .scenario import (PedestrianTrack, Point2, load_scenario, load_trajectory_dataset, parse_scenario,
                       split_tracks)
from .viz import RenderSpec, export_surface, overlay_route

log = logging.getLogger("ecas")

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_MAX_ITER = 2

BUNDLED_DATASET = "synthetic_eth_sample"


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    # argparse exits with 2 on bad flags; 2 is reserved for MaxIterations here
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def configure_logging():
    level_name = os.environ.get("ECAS_LOG", "warning").strip().lower()
    level = {"error": logging.ERROR, "warning": logging.WARNING, "warn": logging.WARNING,
             "info": logging.INFO, "debug": logging.DEBUG}.get(level_name)
    logging.basicConfig(level=level or logging.WARNING, format="%(levelname)s %(name)s: %(message)s",
                        stream=sys.stderr)
    if level is None:
        log.warning("ignoring unknown ECAS_LOG value %r", level_name)


# -- inputs --------------------------------------------------------------------

def read_scenario(ref: str):
    """A scenario file path, or the name of a bundled scenario."""
    if ref in pipeline.BUNDLED_SCENARIOS and not Path(ref).exists():
        return parse_scenario(pipeline.bundled_scenario_text(ref))
    return load_scenario(ref)


def read_dataset(ref: str, frame_interval: float = 0.4):
    if ref == BUNDLED_DATASET and not Path(ref).exists():
        return load_trajectory_dataset(pipeline.bundled_dataset_text(), frame_interval)
    return load_trajectory_dataset(Path(ref).read_text(), frame_interval)


def read_checkpoint(path: str | None) -> SrLstmModel:
    if not path:
        raise UsageError("--model srlstm requires --checkpoint")
    return model_from_json(Path(path).read_text())


def apply_overrides(scenario, args):
    """Flag values win over the scenario file, which wins over built-in defaults."""
    fp_over = {k: v for k, v in (("grid_resolution", args.resolution), ("h", args.h),
                                 ("alpha", args.alpha), ("q_star", args.qstar),
                                 ("delta", args.delta), ("gamma", args.gamma)) if v is not None}
    pp_over = {k: v for k, v in (("step_cap", args.step_cap), ("goal_tolerance", args.goal_tol),
                                 ("max_iterations", args.max_iter), ("rng_seed", args.seed))
               if v is not None}
    pp = scenario.planner_params
    if "step_cap" in pp_over and pp.perturb_radius > pp_over["step_cap"]:
        pp_over["perturb_radius"] = pp_over["step_cap"]
    return replace(scenario, field_params=replace(scenario.field_params, **fp_over),
                   planner_params=replace(pp, **pp_over))


# -- artifact formats ------------------------------------------------------------

def pedestrians_to_csv(observed, predictions) -> str:
    """Observed rows carry t <= 0 relative to the latest frame; predicted rows t > 0."""
    lines = ["ped_id,kind,t,x,y"]
    for tr in observed:
        n = len(tr.frames)
        for k, p in enumerate(tr.positions):
            t = (k - (n - 1)) * tr.frame_interval
            lines.append(f"{tr.ped_id},observed,{t!r},{p.x!r},{p.y!r}")
    for pr in predictions:
        for t, p in pr.waypoints:
            lines.append(f"{pr.ped_id},predicted,{t!r},{p.x!r},{p.y!r}")
    return "\n".join(lines) + "\n"


def pedestrians_from_csv(text: str):
    rows = [ln.strip() for ln in text.splitlines() if ln.strip() and not ln.startswith("#")]
    if not rows or rows[0] != "ped_id,kind,t,x,y":
        raise ValueError("pedestrian CSV must start with header ped_id,kind,t,x,y")
    obs: dict[int, list] = {}
    pred: dict[int, list] = {}
    for ln in rows[1:]:
        pid, kind, t, x, y = ln.split(",")
        bucket = {"observed": obs, "predicted": pred}.get(kind)
        if bucket is None:
            raise ValueError(f"unknown pedestrian row kind {kind!r}")
        bucket.setdefault(int(pid), []).append((float(t), Point2(float(x), float(y))))
    observed = [PedestrianTrack(pid, tuple((k, p) for k, (_, p) in enumerate(rows_)))
                for pid, rows_ in sorted(obs.items())]
    predicted = [PredictedTrajectory(pid, tuple(rows_)) for pid, rows_ in sorted(pred.items())]
    return observed, predicted


def predictions_to_csv(predictions) -> str:
    lines = ["ped_id,step,t,x,y"]
    for pr in predictions:
        for k, (t, p) in enumerate(pr.waypoints, start=1):
            lines.append(f"{pr.ped_id},{k},{t!r},{p.x!r},{p.y!r}")
    return "\n".join(lines) + "\n"


@dataclass
class RunReport:
    scenario: str
    model: str
    seed: int
    pedestrian_speeds: dict = field(default_factory=dict)  # ped id -> m/s over the observed history
    horizon_s: float = 0.0
    route_length: float = 0.0
    steps: int = 0
    perturbations: int = 0
    termination: str = ""
    min_clearance: float | None = None
    timing_ms: dict = field(default_factory=dict)

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True) + "\n"


# -- commands ----------------------------------------------------------------------

def cmd_predict(args) -> int:
    tracks = read_dataset(args.dataset)
    pairs, skipped = split_tracks(tracks, args.obs, args.pred)
    for pid, why in skipped:
        log.info("skipping %s", why)
    if not pairs:
        raise UsageError(f"no track has {args.obs + args.pred} uniformly spaced frames")

    if args.model == "cv":
        preds = [predict_constant_velocity(h, args.pred) for h, _ in pairs]
    else:
        model = read_checkpoint(args.checkpoint)
        # the recurrent model predicts pedestrians jointly, one group per shared frame window
        groups: dict[tuple, list[int]] = {}
        for n, (h, _) in enumerate(pairs):
            groups.setdefault(tuple(h.frame_ids), []).append(n)
        preds = [None] * len(pairs)
        for key in sorted(groups):
            idx = groups[key]
            for n, pr in zip(idx, predict_srlstm(model, [pairs[n][0] for n in idx], args.pred)):
                preds[n] = pr

    rows = ["ped_id,mad,fad"]
    mads, fads = [], []
    for pr, (_, truth) in zip(preds, pairs):
        m, f = mad(pr, truth), fad(pr, truth)
        mads.append(m)
        fads.append(f)
        rows.append(f"{pr.ped_id},{m!r},{f!r}")
    agg_mad, agg_fad = float(np.mean(mads)), float(np.mean(fads))
    rows.append(f"aggregate,{agg_mad!r},{agg_fad!r}")

    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    Path(f"{out}.predictions.csv").write_text(predictions_to_csv(preds))
    Path(f"{out}.metrics.csv").write_text("\n".join(rows) + "\n")
    print(f"{args.model}: {len(pairs)} tracks ({len(skipped)} skipped)  "
          f"MAD {agg_mad:.4f} m  FAD {agg_fad:.4f} m")
    return EXIT_OK


def cmd_plan(args) -> int:
    scenario = apply_overrides(read_scenario(args.scenario), args)
    srlstm = read_checkpoint(args.checkpoint) if args.model == "srlstm" else None
    t0 = time.perf_counter()
    res = pipeline.run_pipeline(scenario, args.model, srlstm, args.obs, args.pred)
    total = (time.perf_counter() - t0) * 1e3

    histories = [pipeline.recent_history(t, args.obs) for t in scenario.pedestrians]
    report = RunReport(
        scenario=scenario.name,
        model=args.model,
        seed=scenario.planner_params.rng_seed,
        pedestrian_speeds={str(t.ped_id): round(t.average_speed(), 6) for t in histories},
        horizon_s=args.pred * (histories[0].frame_interval if histories else 0.4),
        route_length=res.route.length,
        steps=len(res.route.waypoints) - 1,
        perturbations=res.route.perturbation_count,
        termination=res.route.termination,
        min_clearance=res.clearance if math.isfinite(res.clearance) else None,
        timing_ms={**{k: round(v, 3) for k, v in res.timing_ms.items()}, "total": round(total, 3)},
    )
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    Path(f"{out}.route.csv").write_text(route_to_csv(res.route, res.surface))
    Path(f"{out}.surface.csv").write_text(surface_to_csv(res.surface))
    Path(f"{out}.pedestrians.csv").write_text(pedestrians_to_csv(histories, res.predictions))
    Path(f"{out}.report.json").write_text(report.to_json())

    clearance = "n/a" if report.min_clearance is None else f"{report.min_clearance:.3f} m"
    print(f"{scenario.name}: {report.termination} after {report.steps} steps, "
          f"{report.perturbations} perturbed, length {report.route_length:.2f} m, clearance {clearance}")
    return EXIT_OK if res.route.termination == GOAL_REACHED else EXIT_MAX_ITER


def cmd_render(args) -> int:
    surface = surface_from_csv(Path(args.surface).read_text())
    spec = RenderSpec(color_scale=args.scale, value_clip=args.clip, component=args.component,
                      cell_px=args.cell_px)
    rendered = export_surface(surface, spec)
    route = None
    if args.route:
        text = Path(args.route).read_text()
        route = route_from_csv(text)
        recorded = route_grid_from_csv(text)
        g = surface.grid
        if recorded is not None and recorded != (g.origin.x, g.origin.y, g.resolution, g.width, g.height):
            raise UsageError(f"route was planned on grid {recorded[3]}x{recorded[4]} at origin "
                             f"({recorded[0]}, {recorded[1]}), resolution {recorded[2]}; surface is "
                             f"{g.width}x{g.height} at ({g.origin.x}, {g.origin.y}), resolution {g.resolution}")
    observed, predicted = ((), ())
    if args.pedestrians:
        observed, predicted = pedestrians_from_csv(Path(args.pedestrians).read_text())
    try:
        svg = overlay_route(rendered.svg, surface, route, predicted, observed, spec)
    except ValueError as err:
        raise UsageError(f"route or pedestrians do not fit the surface grid: {err}") from err
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    Path(f"{out}.pgm").write_text(rendered.pgm)
    Path(f"{out}.svg").write_text(svg)
    print(f"wrote {out}.pgm and {out}.svg ({surface.width}x{surface.height} cells)")
    return EXIT_OK


def cmd_train(args) -> int:
    tracks = read_dataset(args.dataset)
    model = SrLstmModel.initialize(hidden=args.hidden, embed=args.embed, seed=args.seed)
    trained, trace = train_desk_scale(model, tracks, epochs=args.epochs, lr=args.lr,
                                      clip_norm=args.clip_norm or None, obs_len=args.obs, pred_len=args.pred)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    Path(f"{out}.srlstm.json").write_text(model_to_json(trained))
    Path(f"{out}.loss.csv").write_text(
        "epoch,loss\n" + "".join(f"{k},{v!r}\n" for k, v in enumerate(trace)))
    print(f"trained {args.epochs} epochs, final loss {trace[-1]:.6g} m^2 -> {out}.srlstm.json")
    return EXIT_OK


# -- parser ------------------------------------------------------------------------

def _positive_int(text):
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError("must be >= 1")
    return v


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="ecas", description="Pedestrian-aware route planning on potential-field surfaces.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def model_flags(sp):
        sp.add_argument("--model", choices=("cv", "srlstm"), default="cv")
        sp.add_argument("--checkpoint", help="recurrent model JSON (required for --model srlstm)")
        sp.add_argument("--obs", type=_positive_int, default=8, help="observed frames")
        sp.add_argument("--pred", type=_positive_int, default=12, help="predicted frames")

    pr = sub.add_parser("predict", help="predict held-out frames of a trajectory dataset")
    pr.add_argument("--dataset", required=True,
                    help=f"'frame_id ped_id x y' file, or '{BUNDLED_DATASET}' for the bundled sample")
    model_flags(pr)
    pr.add_argument("--out", required=True, help="output prefix")
    pr.set_defaults(func=cmd_predict)

    pl = sub.add_parser("plan", help="predict, build the energy surface and plan a route")
    pl.add_argument("--scenario", required=True,
                    help="scenario JSON, or one of: " + ", ".join(pipeline.BUNDLED_SCENARIOS))
    model_flags(pl)
    pl.add_argument("--resolution", type=float, help="grid cell size (m)")
    pl.add_argument("--h", type=float, help="attractive gain")
    pl.add_argument("--alpha", type=float, help="boundary term constant")
    pl.add_argument("--qstar", type=float, help="obstacle influence radius (m)")
    pl.add_argument("--delta", type=float, help="obstacle term width")
    pl.add_argument("--gamma", type=float, help="per-frame decay of predicted obstacle weight")
    pl.add_argument("--step-cap", type=float, help="descent step length (m)")
    pl.add_argument("--goal-tol", type=float, help="goal tolerance (m)")
    pl.add_argument("--max-iter", type=_positive_int, help="iteration budget")
    pl.add_argument("--seed", type=int, help="perturbation RNG seed")
    pl.add_argument("--out", required=True, help="output prefix")
    pl.set_defaults(func=cmd_plan)

    rd = sub.add_parser("render", help="heatmap (PGM + SVG) of a saved surface with optional overlays")
    rd.add_argument("--surface", required=True, help="*.surface.csv from plan")
    rd.add_argument("--route", help="*.route.csv from plan")
    rd.add_argument("--pedestrians", help="*.pedestrians.csv from plan")
    rd.add_argument("--scale", choices=("log", "linear"), default="log")
    rd.add_argument("--clip", type=float, help="energy ceiling applied before colouring")
    rd.add_argument("--component", choices=("total", "att", "rep"), default="total")
    rd.add_argument("--cell-px", type=_positive_int, default=4, help="SVG pixels per grid cell")
    rd.add_argument("--out", required=True, help="output prefix")
    rd.set_defaults(func=cmd_render)

    tr = sub.add_parser("train", help="fit the recurrent predictor and write a checkpoint")
    tr.add_argument("--dataset", required=True)
    tr.add_argument("--obs", type=_positive_int, default=8)
    tr.add_argument("--pred", type=_positive_int, default=12)
    tr.add_argument("--epochs", type=_positive_int, default=500)
    tr.add_argument("--lr", type=float, default=0.1)
    tr.add_argument("--hidden", type=_positive_int, default=16)
    tr.add_argument("--embed", type=_positive_int, default=8)
    tr.add_argument("--clip-norm", type=float, default=1.0, help="gradient norm ceiling; 0 disables")
    tr.add_argument("--seed", type=int, default=0)
    tr.add_argument("--out", required=True, help="output prefix")
    tr.set_defaults(func=cmd_train)
    return p


def main(argv=None) -> int:
    configure_logging()
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (UsageError, OSError, ValueError, KeyError) as err:
        msg = err.args[0] if isinstance(err, KeyError) and err.args else err
        print(f"ecas {args.command}: error: {msg}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
