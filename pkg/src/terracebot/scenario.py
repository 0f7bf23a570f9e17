"""Scenario files and run logs.

A scenario is one JSON document holding the terrace, the robot geometry and
scissor design, noise and disturbance schedules, controller gains and the
mission block.  Traces are flat CSV files with a fixed, documented column
order so golden-file comparison and replay stay byte-stable; events are
(timestamp, text) pairs.  All writers go through temp-then-rename so a
failed run never leaves partial output.
"""

from __future__ import annotations

import csv
import json
import math
import os
from dataclasses import dataclass, field

import numpy as np

from . import scissor
from .mission import AgricultureStrategy, MissionSpec, TaskSpec
from .control import PursuitParams
from .world import (DisturbanceSpec, NoiseSpec, RobotGeometry, StepSpec,
                    TerraceProfile, VoidSpec, WorldError, lidar_symbols)


class ScenarioError(ValueError):
    """Malformed scenario document."""


@dataclass(frozen=True)
class Scenario:
    profile: TerraceProfile
    geom: RobotGeometry
    cfg: scissor.ScissorConfig
    noise: NoiseSpec
    disturbances: tuple[DisturbanceSpec, ...]
    mission: MissionSpec
    pursuit: PursuitParams
    start: tuple[float, float, float]
    dt: float = 0.02
    seed: int = 0
    stroke_budget: float = scissor.PROTOTYPE_STROKE_BUDGET


def _require(doc: dict, key: str, kind, where: str):
    if key not in doc:
        raise ScenarioError(f"{where}: missing required key {key!r}")
    val = doc[key]
    if kind is float:
        if not isinstance(val, (int, float)) or isinstance(val, bool):
            raise ScenarioError(f"{where}.{key}: expected a number, got {type(val).__name__}")
        return float(val)
    if not isinstance(val, kind):
        raise ScenarioError(f"{where}.{key}: expected {kind.__name__}, got {type(val).__name__}")
    return val


def _optional(doc: dict, key: str, default):
    return doc.get(key, default)


def parse_scenario(doc: dict) -> Scenario:
    if not isinstance(doc, dict):
        raise ScenarioError("scenario root must be an object")

    terr = _require(doc, "terrace", dict, "scenario")
    steps_doc = _require(terr, "steps", list, "terrace")
    steps = []
    for k, s in enumerate(steps_doc):
        rise = _require(s, "rise", float, f"terrace.steps[{k}]")
        run = _require(s, "run", float, f"terrace.steps[{k}]")
        knots = None
        if "width_knots" in s:
            knots = tuple((float(a), float(b)) for a, b in s["width_knots"])
        steps.append(StepSpec(rise=rise, run=run, width_knots=knots))
    voids = tuple(
        VoidSpec(float(v["x0"]), float(v["x1"]), float(v["y0"]), float(v["y1"]),
                 float(v.get("depth", 5.0)))
        for v in terr.get("voids", ())
    )
    try:
        profile = TerraceProfile(steps=tuple(steps),
                                 wall_side=_optional(terr, "wall_side", "right"),
                                 voids=voids)
    except WorldError as err:
        raise ScenarioError(f"terrace: {err}") from err

    geom_doc = _optional(doc, "robot", {})
    try:
        geom = RobotGeometry(**geom_doc)
    except (TypeError, WorldError) as err:
        raise ScenarioError(f"robot: {err}") from err

    sc = _optional(doc, "scissor", {})
    try:
        cfg = scissor.ScissorConfig(
            a=float(sc.get("a", 0.5)),
            b=float(sc.get("b", 0.16)),
            theta_min=math.radians(float(sc.get("theta_min_deg", 10.0))),
            n=int(sc.get("n", 2)),
            D=float(sc.get("D", 0.4)),
            load=float(sc.get("load", 250.0)),
            climb_height=float(sc.get("climb_height", 0.4)),
        )
    except (ValueError, TypeError) as err:
        raise ScenarioError(f"scissor: {err}") from err

    noise_doc = _optional(doc, "noise", {})
    noise = NoiseSpec(lidar_sigma=float(noise_doc.get("lidar_sigma", 0.0)),
                      seed=int(noise_doc.get("seed", doc.get("seed", 0))))

    dists = []
    for k, d in enumerate(_optional(doc, "disturbances", [])):
        try:
            dists.append(DisturbanceSpec(
                kind=_require(d, "kind", str, f"disturbances[{k}]"),
                magnitude=_require(d, "magnitude", float, f"disturbances[{k}]"),
                t_on=float(d.get("t_on", 0.0)),
                t_off=float(d.get("t_off", math.inf)),
            ))
        except WorldError as err:
            raise ScenarioError(f"disturbances[{k}]: {err}") from err

    m = _optional(doc, "mission", {})
    strategy_doc = m.get("strategy", [[]])
    if not isinstance(strategy_doc, list):
        raise ScenarioError("mission.strategy must be a list of task lists")
    per_step = []
    for k, tasks in enumerate(strategy_doc):
        specs = []
        for t in tasks:
            if isinstance(t, str):
                t = {"kind": t}
            try:
                specs.append(TaskSpec(kind=t["kind"], duty=float(t.get("duty", 1.0)),
                                      seed_spacing=float(t.get("seed_spacing", 0.1))))
            except (KeyError, ValueError) as err:
                raise ScenarioError(f"mission.strategy[{k}]: {err}") from err
        per_step.append(tuple(specs))
    y_span = tuple(float(v) for v in m.get("y_span", (0.0, 4.0)))
    if len(y_span) != 2:
        raise ScenarioError("mission.y_span must be [y0, y1]")
    mission = MissionSpec(
        n_crop_rows=int(m.get("n_crop_rows", 1)),
        y_span=y_span,  # type: ignore[arg-type]
        strategy=AgricultureStrategy(per_step=tuple(per_step)),
        speed=float(m.get("speed", 0.5)),
        climb_standoff=float(m.get("climb_standoff", 1.0)),
        wall_margin=float(m.get("wall_margin", 0.3)),
        edge_margin=float(m.get("edge_margin", 0.35)),
        row_spacing=float(m.get("row_spacing", 0.5)),
        max_time=float(m.get("max_time", 600.0)),
    )

    p = _optional(doc, "pursuit", {})
    pursuit = PursuitParams(
        l_0=float(p.get("l_0", 0.5)),
        beta=float(p.get("beta", 0.3)),
        k_dyaw=float(p.get("k_dyaw", 0.3)),
        wheelbase=float(p.get("wheelbase", geom.track_width)),
    )

    start_doc = _optional(doc, "start", {})
    start = (float(start_doc.get("x", 1.0)), float(start_doc.get("y", 0.0)),
             float(start_doc.get("yaw", 0.0)))

    dt = float(_optional(doc, "dt", 0.02))
    if not (0.0 < dt <= 0.05):
        raise ScenarioError(f"dt={dt} outside (0, 0.05]")

    return Scenario(
        profile=profile, geom=geom, cfg=cfg, noise=noise,
        disturbances=tuple(dists), mission=mission, pursuit=pursuit,
        start=start, dt=dt, seed=int(doc.get("seed", 0)),
        stroke_budget=float(doc.get("stroke_budget", scissor.PROTOTYPE_STROKE_BUDGET)),
    )


def load_scenario(path: str) -> Scenario:
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except json.JSONDecodeError as err:
        raise ScenarioError(f"{path}: invalid JSON ({err})") from err
    return parse_scenario(doc)


# ---------------------------------------------------------------------------
# Trace and event logs


def trace_columns(wheel_pairs: int = 2) -> list[str]:
    cols = ["t", "x", "y", "yaw", "pitch", "chassis_z"]
    cols += [f"ext_{k + 1}" for k in range(wheel_pairs)]
    cols += lidar_symbols(wheel_pairs)
    cols += ["phase"]
    return cols


def _fmt(v: float) -> str:
    if isinstance(v, float) and math.isinf(v):
        return "inf"
    return f"{v:.6f}"


class TraceWriter:
    """Accumulate per-tick records; write one CSV atomically on save()."""

    def __init__(self, wheel_pairs: int = 2) -> None:
        self.wheel_pairs = wheel_pairs
        self.columns = trace_columns(wheel_pairs)
        self.rows: list[list[str]] = []

    def record(self, state, frame, phase: str) -> None:
        row = [_fmt(state.t), _fmt(state.x), _fmt(state.y), _fmt(state.yaw),
               _fmt(state.pitch), _fmt(state.chassis_z)]
        row += [_fmt(float(e)) for e in state.scissor_ext]
        row += [_fmt(frame.lidar[sym]) for sym in lidar_symbols(self.wheel_pairs)]
        row += [phase]
        self.rows.append(row)

    def save(self, path: str) -> None:
        tmp = path + ".tmp"
        with open(tmp, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(self.columns)
            w.writerows(self.rows)
        os.replace(tmp, path)


class EventsWriter:
    def __init__(self) -> None:
        self.rows: list[tuple[str, str]] = []

    def extend(self, events: list[tuple[float, str]]) -> None:
        for t, text in events:
            self.rows.append((_fmt(t), text))

    def save(self, path: str) -> None:
        tmp = path + ".tmp"
        with open(tmp, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t", "event"])
            w.writerows(self.rows)
        os.replace(tmp, path)


def read_trace(path: str) -> dict[str, np.ndarray | list[str]]:
    """Trace CSV back into arrays (phase stays a string column)."""
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        cols: dict[str, list] = {name: [] for name in reader.fieldnames or []}
        for rec in reader:
            for k, v in rec.items():
                cols[k].append(v)
    out: dict[str, np.ndarray | list[str]] = {}
    for k, vals in cols.items():
        if k == "phase":
            out[k] = vals
        else:
            out[k] = np.array([float(v) for v in vals])
    return out
