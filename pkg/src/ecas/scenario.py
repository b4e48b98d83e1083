"""Riding-environment types, scenario files and ETH/UCY-style trajectory datasets."""

from __future__ import annotations

import json
import logging
import math
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Iterable, NamedTuple, Sequence

log = logging.getLogger(__name__)

SCENARIO_KEYS = ("name", "boundaries", "start", "goal", "extent", "pedestrians",
                 "field_params", "planner_params")


class ScenarioError(ValueError):
    pass


class ScenarioSyntaxError(ScenarioError):
    def __init__(self, msg: str, line: int, column: int):
        super().__init__(f"line {line}, column {column}: {msg}")
        self.line = line
        self.column = column


class ScenarioSemanticError(ScenarioError):
    pass


class DatasetFormatError(ValueError):
    def __init__(self, msg: str, line: int):
        super().__init__(f"line {line}: {msg}")
        self.line = line


class InsufficientFrames(ValueError):
    """Raised by :func:`split_obs_pred` when a track is too short or irregular."""


class Point2(NamedTuple):
    x: float
    y: float


@dataclass(frozen=True)
class HalfPlane:
    """Half-plane ``a*x + b*y + c >= 0``, stored with a unit normal."""

    a: float
    b: float
    c: float

    def __post_init__(self):
        norm = math.hypot(self.a, self.b)
        if not norm > 0 or not math.isfinite(norm) or not math.isfinite(self.c):
            raise ScenarioSemanticError("half-plane normal (a, b) must be finite and non-zero")
        if norm != 1.0:
            object.__setattr__(self, "a", self.a / norm)
            object.__setattr__(self, "b", self.b / norm)
            object.__setattr__(self, "c", self.c / norm)

    def __call__(self, x, y):
        return self.a * x + self.b * y + self.c


@dataclass(frozen=True)
class PedestrianTrack:
    ped_id: int
    frames: tuple[tuple[int, Point2], ...]
    frame_interval: float = 0.4

    def __post_init__(self):
        object.__setattr__(self, "frames",
                           tuple((int(f), Point2(float(p[0]), float(p[1]))) for f, p in self.frames))
        idx = [f for f, _ in self.frames]
        if any(b <= a for a, b in zip(idx, idx[1:])):
            raise ScenarioSemanticError(f"pedestrian {self.ped_id}: frame indices must be strictly increasing")
        if not all(math.isfinite(p.x) and math.isfinite(p.y) for _, p in self.frames):
            raise ScenarioSemanticError(f"pedestrian {self.ped_id}: non-finite position")
        if not self.frame_interval > 0:
            raise ScenarioSemanticError(f"pedestrian {self.ped_id}: frame_interval must be positive")

    def __len__(self):
        return len(self.frames)

    @property
    def frame_ids(self) -> list[int]:
        return [f for f, _ in self.frames]

    @property
    def positions(self) -> list[Point2]:
        return [p for _, p in self.frames]

    @property
    def latest(self) -> Point2:
        return self.frames[-1][1]

    def average_speed(self) -> float:
        """Path length over elapsed time, with one ``frame_interval`` per sample step."""
        if len(self.frames) < 2:
            return 0.0
        pts = self.positions
        length = sum(math.dist(p, q) for p, q in zip(pts, pts[1:]))
        return length / ((len(pts) - 1) * self.frame_interval)


@dataclass(frozen=True)
class FieldParams:
    h: float = 1.0
    alpha: float = 0.1
    q_star: float = 2.0
    delta: float = 0.5
    grid_resolution: float = 0.25
    gamma: float = 0.9  # per-frame decay of predicted obstacle weight

    def __post_init__(self):
        for name in ("h", "alpha", "q_star", "delta", "grid_resolution"):
            _require_positive(name, getattr(self, name))
        if not 0 < self.gamma <= 1:
            raise ScenarioSemanticError("gamma must be in (0, 1]")


@dataclass(frozen=True)
class PlannerParams:
    max_iterations: int = 500
    step_cap: float = 1.0
    goal_tolerance: float = 2.0
    stall_window: int = 10
    stall_epsilon: float = 1.5
    perturb_radius: float = 1.0
    rng_seed: int = 42

    def __post_init__(self):
        _require_positive("max_iterations", self.max_iterations)
        _require_positive("goal_tolerance", self.goal_tolerance)
        _require_positive("stall_window", self.stall_window)
        _require_positive("stall_epsilon", self.stall_epsilon)
        if not 0 < self.step_cap <= 1.0:
            raise ScenarioSemanticError("step_cap must be in (0, 1.0]")
        if not 0 <= self.perturb_radius <= self.step_cap:
            raise ScenarioSemanticError("perturb_radius must be in [0, step_cap]")


def _require_positive(name, value):
    if not (isinstance(value, (int, float)) and math.isfinite(value) and value > 0):
        raise ScenarioSemanticError(f"{name} must be positive")


@dataclass(frozen=True)
class Scenario:
    boundaries: tuple[HalfPlane, ...]
    start: Point2
    goal: Point2
    pedestrians: tuple[PedestrianTrack, ...] = ()
    field_params: FieldParams = field(default_factory=FieldParams)
    planner_params: PlannerParams = field(default_factory=PlannerParams)
    extent: tuple[float, float, float, float] | None = None  # xmin, xmax, ymin, ymax
    name: str = "scenario"

    def __post_init__(self):
        object.__setattr__(self, "boundaries", tuple(self.boundaries))
        object.__setattr__(self, "pedestrians", tuple(self.pedestrians))
        object.__setattr__(self, "start", Point2(*map(float, self.start)))
        object.__setattr__(self, "goal", Point2(*map(float, self.goal)))
        for label, p in (("start", self.start), ("goal", self.goal)):
            if not (math.isfinite(p.x) and math.isfinite(p.y)):
                raise ScenarioSemanticError(f"{label} must be finite")
            if not inside_region(self.boundaries, p, strict=True):
                raise ScenarioSemanticError(f"{label} ({p.x}, {p.y}) is outside the drivable region")
        ids = [t.ped_id for t in self.pedestrians]
        if len(set(ids)) != len(ids):
            raise ScenarioSemanticError("pedestrian ids must be unique")
        if self.extent is not None:
            x0, x1, y0, y1 = map(float, self.extent)
            if not (x1 > x0 and y1 > y0):
                raise ScenarioSemanticError("extent must satisfy xmin < xmax and ymin < ymax")
            object.__setattr__(self, "extent", (x0, x1, y0, y1))

    def grid_extent(self) -> tuple[float, float, float, float]:
        """Explicit extent if given, else the bounding box of the drivable region."""
        if self.extent is not None:
            return self.extent
        return region_bbox(self.boundaries)


def inside_region(boundaries: Iterable[HalfPlane], p, strict: bool = False) -> bool:
    if strict:
        return all(hp(p[0], p[1]) > 0 for hp in boundaries)
    return all(hp(p[0], p[1]) >= 0 for hp in boundaries)


def region_bbox(boundaries: Sequence[HalfPlane], tol: float = 1e-9):
    """Bounding box of the convex polygon cut out by ``boundaries``.

    Vertices are the pairwise line intersections that satisfy every constraint.
    Raises if the region is unbounded or empty.
    """
    verts = []
    for i, p in enumerate(boundaries):
        for q in boundaries[i + 1:]:
            det = p.a * q.b - p.b * q.a
            if abs(det) < 1e-12:
                continue
            x = (-p.c * q.b + q.c * p.b) / det
            y = (-p.a * q.c + q.a * p.c) / det
            if all(hp(x, y) >= -tol for hp in boundaries):
                verts.append((x, y))
    if len(verts) < 3:
        raise ScenarioSemanticError("drivable region is empty or unbounded; give an explicit extent")
    xs, ys = zip(*verts)
    # Unbounded regions can still have >= 3 vertices; probe outward along each axis.
    span = max(max(xs) - min(xs), max(ys) - min(ys), 1.0)
    cx, cy = sum(xs) / len(xs), sum(ys) / len(ys)
    for dx, dy in ((1, 0), (-1, 0), (0, 1), (0, -1)):
        if inside_region(boundaries, (cx + dx * 1e3 * span, cy + dy * 1e3 * span)):
            raise ScenarioSemanticError("drivable region is unbounded; give an explicit extent")
    return min(xs), max(xs), min(ys), max(ys)


# -- scenario documents -----------------------------------------------------

def parse_scenario(text: str) -> Scenario:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as err:
        raise ScenarioSyntaxError(err.msg, err.lineno, err.colno) from None
    if not isinstance(doc, dict):
        raise ScenarioSemanticError("scenario document must be a JSON object")
    unknown = set(doc) - set(SCENARIO_KEYS)
    if unknown:
        raise ScenarioSemanticError(f"unknown top-level keys: {sorted(unknown)}")
    for key in ("boundaries", "start", "goal"):
        if key not in doc:
            raise ScenarioSemanticError(f"missing required key '{key}'")
    try:
        boundaries = [HalfPlane(float(b["a"]), float(b["b"]), float(b["c"])) for b in doc["boundaries"]]
        start = _point(doc["start"])
        goal = _point(doc["goal"])
        peds = [
            PedestrianTrack(
                ped_id=int(p["id"]),
                frame_interval=float(p.get("frame_interval", 0.4)),
                frames=[(int(f), Point2(float(x), float(y))) for f, x, y in p["frames"]],
            )
            for p in doc.get("pedestrians", [])
        ]
        fp = FieldParams(**doc.get("field_params", {}))
        pp = PlannerParams(**doc.get("planner_params", {}))
    except ScenarioError:
        raise
    except (KeyError, TypeError, ValueError) as err:
        raise ScenarioSemanticError(f"malformed scenario: {err!r}") from None
    extent = doc.get("extent")
    if extent is not None:
        extent = (extent["xmin"], extent["xmax"], extent["ymin"], extent["ymax"])
    return Scenario(boundaries=boundaries, start=start, goal=goal, pedestrians=peds,
                    field_params=fp, planner_params=pp, extent=extent,
                    name=str(doc.get("name", "scenario")))


def _point(obj) -> Point2:
    return Point2(float(obj["x"]), float(obj["y"]))


def scenario_to_dict(sc: Scenario) -> dict:
    doc = {
        "name": sc.name,
        "boundaries": [{"a": b.a, "b": b.b, "c": b.c} for b in sc.boundaries],
        "start": {"x": sc.start.x, "y": sc.start.y},
        "goal": {"x": sc.goal.x, "y": sc.goal.y},
        "pedestrians": [
            {"id": t.ped_id, "frame_interval": t.frame_interval,
             "frames": [[f, p.x, p.y] for f, p in t.frames]}
            for t in sc.pedestrians
        ],
        "field_params": vars(sc.field_params).copy(),
        "planner_params": vars(sc.planner_params).copy(),
    }
    if sc.extent is not None:
        doc["extent"] = dict(zip(("xmin", "xmax", "ymin", "ymax"), sc.extent))
    return doc


def serialize_scenario(sc: Scenario) -> str:
    return json.dumps(scenario_to_dict(sc), indent=2)


def load_scenario(path) -> Scenario:
    with open(path) as fh:
        return parse_scenario(fh.read())


# -- trajectory datasets ----------------------------------------------------

def load_trajectory_dataset(text: str, frame_interval: float = 0.4) -> list[PedestrianTrack]:
    """Parse ``frame_id ped_id x y`` rows into per-pedestrian tracks.

    Rows are grouped by pedestrian and sorted by frame. Tracks with fewer than two
    frames are dropped and counted in a warning. Lines starting with ``#`` and blank
    lines are ignored.
    """
    rows = defaultdict(dict)
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        if len(parts) != 4:
            raise DatasetFormatError(f"expected 4 fields, got {len(parts)}", lineno)
        try:
            frame, pid = int(float(parts[0])), int(float(parts[1]))
            x, y = float(parts[2]), float(parts[3])
        except ValueError:
            raise DatasetFormatError(f"non-numeric field in {line!r}", lineno) from None
        if not (math.isfinite(x) and math.isfinite(y)):
            raise DatasetFormatError("non-finite coordinate", lineno)
        if frame in rows[pid]:
            raise DatasetFormatError(f"duplicate frame {frame} for pedestrian {pid}", lineno)
        rows[pid][frame] = Point2(x, y)

    tracks, dropped = [], 0
    for pid in sorted(rows):
        frames = sorted(rows[pid].items())
        if len(frames) < 2:
            dropped += 1
            continue
        tracks.append(PedestrianTrack(pid, tuple(frames), frame_interval))
    if dropped:
        log.warning("dropped %d track(s) with fewer than 2 frames", dropped)
    return tracks


def load_dataset_file(path, frame_interval: float = 0.4) -> list[PedestrianTrack]:
    with open(path) as fh:
        return load_trajectory_dataset(fh.read(), frame_interval)


def split_obs_pred(track: PedestrianTrack, obs_len: int = 8, pred_len: int = 12):
    """Split the leading ``obs_len + pred_len`` frames into (history, ground truth).

    Raises :class:`InsufficientFrames` if the track is too short or its frame
    spacing over that window is not uniform; callers skip such tracks.
    """
    need = obs_len + pred_len
    if obs_len < 1 or pred_len < 1:
        raise ValueError("obs_len and pred_len must be >= 1")
    if len(track) < need:
        raise InsufficientFrames(f"pedestrian {track.ped_id}: needs {need} frames, has {len(track)}")
    window = track.frames[:need]
    steps = {b[0] - a[0] for a, b in zip(window, window[1:])}
    if len(steps) > 1:
        raise InsufficientFrames(f"pedestrian {track.ped_id}: non-uniform frame spacing {sorted(steps)}")
    history = PedestrianTrack(track.ped_id, window[:obs_len], track.frame_interval)
    truth = PedestrianTrack(track.ped_id, window[obs_len:], track.frame_interval)
    return history, truth


def split_tracks(tracks, obs_len: int = 8, pred_len: int = 12):
    """Split many tracks; returns ``(pairs, skipped)`` with skip reasons."""
    pairs, skipped = [], []
    for t in tracks:
        try:
            pairs.append(split_obs_pred(t, obs_len, pred_len))
        except InsufficientFrames as err:
            skipped.append((t.ped_id, str(err)))
    return pairs, skipped
