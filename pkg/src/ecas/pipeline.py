"""End-to-end wiring: predict pedestrians, build the surface, plan, measure clearance."""

from __future__ import annotations

import time
from dataclasses import dataclass, field, replace
from importlib import resources

from .field import EnergySurface, build_energy_surface
from .planner import PlannedRoute, plan, route_clearance
from .prediction import (PredictedTrajectory, SrLstmModel, predict_constant_velocity,
                         predict_srlstm)
from .scenario import PedestrianTrack, Scenario, parse_scenario

BUNDLED_SCENARIOS = ("parallel_moving", "crossing_moving", "empty_corridor")


def bundled_scenario_text(name: str) -> str:
    if name not in BUNDLED_SCENARIOS:
        raise KeyError(f"no bundled scenario named {name!r}")
    return resources.files("ecas.data").joinpath(f"{name}.json").read_text()


def load_bundled(name: str) -> Scenario:
    return parse_scenario(bundled_scenario_text(name))


def bundled_dataset_text() -> str:
    """Synthetic 50-track sample in the ``frame_id ped_id x y`` format."""
    return resources.files("ecas.data").joinpath("synthetic_eth_sample.txt").read_text()


def recent_history(track: PedestrianTrack, obs_len: int) -> PedestrianTrack:
    return PedestrianTrack(track.ped_id, track.frames[-obs_len:], track.frame_interval)


def predict_scenario(scenario: Scenario, model: str = "cv", srlstm: SrLstmModel | None = None,
                     obs_len: int = 8, pred_len: int = 12) -> list[PredictedTrajectory]:
    histories = [recent_history(t, obs_len) for t in scenario.pedestrians]
    if model == "cv":
        return [predict_constant_velocity(h, pred_len) for h in histories]
    if model == "srlstm":
        if srlstm is None:
            raise ValueError("srlstm prediction needs a model checkpoint")
        return predict_srlstm(srlstm, histories, pred_len)
    raise ValueError(f"unknown model {model!r}; expected 'cv' or 'srlstm'")


@dataclass
class PipelineResult:
    scenario: Scenario
    predictions: list
    surface: EnergySurface
    route: PlannedRoute
    clearance: float
    timing_ms: dict = field(default_factory=dict)


def run_pipeline(scenario: Scenario, model: str = "cv", srlstm: SrLstmModel | None = None,
                 obs_len: int = 8, pred_len: int = 12, seed: int | None = None) -> PipelineResult:
    timing = {}
    t0 = time.perf_counter()
    preds = predict_scenario(scenario, model, srlstm, obs_len, pred_len)
    t1 = time.perf_counter()
    surface = build_energy_surface(scenario, preds)
    t2 = time.perf_counter()
    params = scenario.planner_params
    if seed is not None:
        params = replace(params, rng_seed=seed)
    route = plan(surface, params, scenario.start, scenario.goal, boundaries=scenario.boundaries)
    t3 = time.perf_counter()
    clearance = route_clearance(route, preds, scenario.pedestrians)
    t4 = time.perf_counter()
    timing.update(predict=(t1 - t0) * 1e3, surface=(t2 - t1) * 1e3, plan=(t3 - t2) * 1e3,
                  clearance=(t4 - t3) * 1e3)
    return PipelineResult(scenario, preds, surface, route, clearance, timing)
