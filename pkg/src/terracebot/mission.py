"""Localization, terrace-width estimation, row planning and task scheduling.

Dead reckoning from wheel encoders feeds an EKF that fuses wall-relative
measurements from the side lidar pair (yaw to the wall and distance to it);
GPS is deliberately absent.  Width estimates trigger on sudden changes of
the 45-deg width lidars.  Row plans are boustrophedon sweeps at fixed wall
offsets, and the scheduler runs each step's task passes before requesting a
climb to the next step.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import climb as climb_mod
from . import control, scissor
from .climb import (ClimbUpFsm, FailsafeMonitor, Phase, stability_check,
                    sudden_change)
from .control import PursuitParams, PurePursuitTracker, SeederParams, SprayerController
from .world import Commands, RobotGeometry, SensorFrame, Simulator, TipOverError

TASK_KINDS = ("plough", "sow", "roll", "water", "pesticide", "none")


class MissionError(ValueError):
    pass


class InfeasiblePlanError(MissionError):
    """Terrace too narrow for the requested rows at the safety margins."""


# ---------------------------------------------------------------------------
# Dead reckoning and EKF


def odometry_update(
    x: float, y: float, yaw: float, d_left: float, d_right: float, track_width: float
) -> tuple[float, float, float]:
    """Midpoint-arc dead reckoning from wheel increments."""
    if not (math.isfinite(d_left) and math.isfinite(d_right)):
        raise MissionError("non-finite odometry increment")
    ds = 0.5 * (d_left + d_right)
    dyaw = (d_right - d_left) / track_width
    mid = yaw + 0.5 * dyaw
    return x + ds * math.cos(mid), y + ds * math.sin(mid), _wrap(yaw + dyaw)


@dataclass
class LocalizationState:
    est: np.ndarray = field(default_factory=lambda: np.zeros(3))  # x, y, yaw
    cov: np.ndarray = field(default_factory=lambda: np.eye(3) * 1e-4)
    step_number: int = 0  # relative to the starting step
    crop_row: int = 0
    dist_left: float = math.inf
    dist_right: float = math.inf
    width_estimates: list[tuple[float, float]] = field(default_factory=list)


class Ekf:
    """EKF on (x, y, yaw) with odometry prediction and wall updates.

    The wall measurement is (yaw relative to a reference heading, distance
    of the robot centre to a wall plane x = wall_x).  Updates failing a
    chi-square gate (Mahalanobis distance > 9) are rejected and counted.
    """

    def __init__(
        self,
        x0: np.ndarray,
        P0: np.ndarray,
        track_width: float,
        odo_sigma: float = 1e-3,
    ) -> None:
        self.x = np.asarray(x0, dtype=float).copy()
        self.P = np.asarray(P0, dtype=float).copy()
        self.track = track_width
        self.odo_sigma = odo_sigma
        self.rejected = 0

    def predict(self, d_left: float, d_right: float) -> None:
        x, y, yaw = self.x
        ds = 0.5 * (d_left + d_right)
        dyaw = (d_right - d_left) / self.track
        mid = yaw + 0.5 * dyaw
        self.x = np.array([x + ds * math.cos(mid), y + ds * math.sin(mid),
                           _wrap(yaw + dyaw)])
        F = np.array([
            [1.0, 0.0, -ds * math.sin(mid)],
            [0.0, 1.0, ds * math.cos(mid)],
            [0.0, 0.0, 1.0],
        ])
        # Jacobian wrt the two wheel increments.
        c, s = math.cos(mid), math.sin(mid)
        G = np.array([
            [0.5 * c + ds * s / (2 * self.track), 0.5 * c - ds * s / (2 * self.track)],
            [0.5 * s - ds * c / (2 * self.track), 0.5 * s + ds * c / (2 * self.track)],
            [-1.0 / self.track, 1.0 / self.track],
        ])
        Q = np.eye(2) * self.odo_sigma**2
        self.P = F @ self.P @ F.T + G @ Q @ G.T
        self.P = 0.5 * (self.P + self.P.T)

    def update_wall(
        self,
        phi_meas: float,
        dist_meas: float,
        wall_x: float,
        psi_ref: float,
        R: np.ndarray,
        gate: float = 9.0,
    ) -> bool:
        """Fuse (wall-relative yaw, centre-to-wall distance); False if gated."""
        x, y, yaw = self.x
        sign = 1.0 if wall_x >= x else -1.0
        h = np.array([_wrap(yaw - psi_ref), sign * (wall_x - x)])
        H = np.array([[0.0, 0.0, 1.0], [-sign, 0.0, 0.0]])
        z = np.array([phi_meas, dist_meas])
        nu = z - h
        nu[0] = _wrap(nu[0])
        S = H @ self.P @ H.T + R
        m2 = float(nu @ np.linalg.solve(S, nu))
        if m2 > gate:
            self.rejected += 1
            return False
        K = self.P @ H.T @ np.linalg.inv(S)
        self.x = self.x + K @ nu
        self.x[2] = _wrap(self.x[2])
        I_KH = np.eye(3) - K @ H
        self.P = I_KH @ self.P @ I_KH.T + K @ R @ K.T  # Joseph form
        self.P = 0.5 * (self.P + self.P.T)
        return True

    def nees(self, truth: np.ndarray) -> float:
        e = self.x - np.asarray(truth, dtype=float)
        e[2] = _wrap(e[2])
        return float(e @ np.linalg.solve(self.P, e))


# ---------------------------------------------------------------------------
# Wall-relative estimation (Eqs. for width and heading-to-wall)


def estimate_phi(frame: SensorFrame, geom: RobotGeometry, side: str = "left") -> float:
    """Heading-to-wall angle from the side lidar pair: atan((front-back)/d_L).

    Positive means the nose points away from the wall (front reading longer).
    """
    f_sym, b_sym = ("L_lf", "L_lb") if side == "left" else ("L_rf", "L_rb")
    lf, lb = frame.lidar[f_sym], frame.lidar[b_sym]
    if not (math.isfinite(lf) and math.isfinite(lb)):
        raise MissionError(f"side pair {f_sym}/{b_sym} not returning")
    return math.atan((lf - lb) / geom.d_l)


def estimate_width(
    frame: SensorFrame,
    geom: RobotGeometry,
    phi: float | None = None,
    side: str = "left",
) -> float:
    """Terrace width from the wall-side pair plus the robot span.

        w = [(L_f + L_b)/2 + d_W + l_db_mount * tan 45] * cos(phi)

    The last term is the horizontal overhang at which the 45-deg width
    lidar's ground point crosses the drop edge, which is what triggers the
    measurement.
    """
    f_sym, b_sym = ("L_lf", "L_lb") if side == "left" else ("L_rf", "L_rb")
    lf, lb = frame.lidar[f_sym], frame.lidar[b_sym]
    if not (math.isfinite(lf) and math.isfinite(lb)):
        raise MissionError(f"side pair {f_sym}/{b_sym} not returning")
    if phi is None:
        phi = estimate_phi(frame, geom, side)
    span = 0.5 * (lf + lb) + geom.track_width + geom.l_db_mount * math.tan(math.radians(45.0))
    return span * math.cos(phi)


class WidthEstimator:
    """Collect width estimates on sudden changes of the width lidars."""

    def __init__(self, geom: RobotGeometry, wall_side: str = "left",
                 threshold: float = 0.05) -> None:
        self.geom = geom
        self.wall_side = wall_side
        self.threshold = threshold
        self._prev: dict[str, float] = {}
        self.estimates: list[tuple[float, float]] = []  # (along-step y, width)

    def update(self, frame: SensorFrame, y_pos: float) -> float | None:
        triggered = False
        for sym in ("W_l", "W_r"):
            curr = frame.clamped(sym, self.geom.max_lidar_range)
            prev = self._prev.get(sym)
            self._prev[sym] = curr
            if prev is not None and abs(curr - prev) > self.threshold:
                triggered = True
        if not triggered:
            return None
        try:
            w = estimate_width(frame, self.geom, side=self.wall_side)
        except MissionError:
            return None
        self.estimates.append((y_pos, w))
        return w


# ---------------------------------------------------------------------------
# Row planning


@dataclass(frozen=True)
class RowPlan:
    waypoints: tuple[tuple[float, float, str], ...]  # (x, y, tag)
    n_rows: int
    row_xs: tuple[float, ...]

    def path(self) -> np.ndarray:
        return np.array([[x, y] for x, y, _ in self.waypoints])

    def entry_heading(self) -> float:
        (x0, y0, _), (x1, y1, _) = self.waypoints[0], self.waypoints[1]
        return math.atan2(y1 - y0, x1 - x0)

    def exit_heading(self) -> float:
        (x0, y0, _), (x1, y1, _) = self.waypoints[-2], self.waypoints[-1]
        return math.atan2(y1 - y0, x1 - x0)


def plan_rows(
    n_rows: int,
    wall_x: float,
    width: float,
    y_span: tuple[float, float],
    geom: RobotGeometry,
    wall_margin: float = 0.3,
    edge_margin: float = 0.35,
    row_spacing: float = 0.5,
    waypoint_step: float = 0.4,
) -> RowPlan:
    """Boustrophedon sweep over crop rows at constant wall offsets.

    Margins are clearances of the robot body sides, so row centrelines stay
    margin + track/2 away from both the wall and the narrowest drop edge.
    Odd row counts exit with the entry heading (zero-cost turn at the gate).
    """
    if n_rows < 1:
        raise InfeasiblePlanError("need at least one row")
    half = geom.track_width / 2
    x_hi = wall_x - wall_margin - half
    x_lo = wall_x - width + edge_margin + half
    need = (n_rows - 1) * row_spacing
    if x_hi - x_lo < need - 1e-9:
        raise InfeasiblePlanError(
            f"width {width:.2f} m cannot fit {n_rows} rows at {row_spacing} m spacing "
            f"with margins ({x_hi - x_lo:.2f} m usable, {need:.2f} m needed)"
        )
    row_xs = [x_hi - j * row_spacing for j in range(n_rows)]
    y0, y1 = y_span
    wps: list[tuple[float, float, str]] = []
    for j, rx in enumerate(row_xs):
        ya, yb = (y0, y1) if j % 2 == 0 else (y1, y0)
        n_pts = max(2, int(math.ceil(abs(yb - ya) / waypoint_step)) + 1)
        for yy in np.linspace(ya, yb, n_pts):
            wps.append((rx, float(yy), f"row:{j}"))
        if j + 1 < n_rows:
            wps.append((row_xs[j + 1], yb, "turn"))
    return RowPlan(waypoints=tuple(wps), n_rows=n_rows, row_xs=tuple(row_xs))


# ---------------------------------------------------------------------------
# Strategy and the mission loop


@dataclass(frozen=True)
class TaskSpec:
    kind: str
    duty: float = 1.0  # sprayer pump duty
    seed_spacing: float = 0.1  # m

    def __post_init__(self) -> None:
        if self.kind not in TASK_KINDS:
            raise MissionError(f"unknown task kind {self.kind!r}")


@dataclass(frozen=True)
class AgricultureStrategy:
    """Ordered task passes per terrace step (index 0 = starting step)."""

    per_step: tuple[tuple[TaskSpec, ...], ...]

    def tasks_for(self, step_idx: int) -> tuple[TaskSpec, ...]:
        if step_idx < len(self.per_step):
            return self.per_step[step_idx]
        return ()


@dataclass
class MissionResult:
    status: str  # complete | failsafe | tipover | timeout
    exit_code: int
    events: list[tuple[float, str]]
    climbs: int
    localization: LocalizationState


@dataclass(frozen=True)
class MissionSpec:
    n_crop_rows: int = 1
    y_span: tuple[float, float] = (0.0, 4.0)
    strategy: AgricultureStrategy = AgricultureStrategy(per_step=((),))
    speed: float = 0.5
    climb_standoff: float = 1.0
    wall_margin: float = 0.3
    edge_margin: float = 0.35
    row_spacing: float = 0.5
    max_time: float = 600.0


class MissionRunner:
    """Run rows and climbs on one terrace until the top step is reached."""

    def __init__(
        self,
        sim: Simulator,
        spec: MissionSpec,
        pursuit: PursuitParams | None = None,
        trace_hook=None,
    ) -> None:
        self.sim = sim
        self.spec = spec
        self.pursuit = pursuit or PursuitParams(k_dyaw=0.3,
                                                wheelbase=sim.geom.track_width)
        self.trace_hook = trace_hook
        self.failsafe = FailsafeMonitor(sim.geom)
        self.sprayer = SprayerController()
        self.events: list[tuple[float, str]] = []
        self.loc = LocalizationState(
            est=np.array([sim.state.x, sim.state.y, sim.state.yaw]))
        self.ekf = Ekf(self.loc.est, np.eye(3) * 1e-6, sim.geom.track_width)
        self.width_estimator = WidthEstimator(sim.geom, sim.profile.wall_side)
        self._start_step = sim.state.on_step
        self.climbs = 0
        self._phase_label = "idle"

    # -- primitives ----------------------------------------------------------

    def _event(self, text: str) -> None:
        self.events.append((self.sim.state.t, text))

    def _tick(self, cmd: Commands, suppress: set[str] = frozenset()) -> SensorFrame:
        """One control period: sense, fail-safe gate, actuate, log."""
        frame = self.sim.sense()
        self.failsafe.suppressed = set(suppress)
        status = self.failsafe.update(frame)
        cmd = self.failsafe.gate(cmd)
        if status.triggered and not any(e[1].startswith("failsafe") for e in self.events):
            self._event(f"failsafe:{status.triggered_by}")
        self.ekf.predict(*frame.odom)
        self.loc.est = self.ekf.x
        self.loc.cov = self.ekf.P
        self.loc.step_number = self.sim.state.on_step - self._start_step
        w = self.width_estimator.update(frame, self.sim.state.y)
        if w is not None:
            self.loc.width_estimates.append((self.sim.state.y, w))
            self._event(f"width:{w:.3f}")
        self.sim.step(cmd)
        if self.trace_hook is not None:
            self.trace_hook(self.sim.state, frame, self._phase_label)
        return frame

    def _timed_out(self) -> bool:
        return self.sim.state.t >= self.spec.max_time

    def _rotate_to(self, yaw_target: float, tol: float = math.radians(1.0)) -> bool:
        g = self.sim.geom
        while not self._timed_out():
            err = _wrap(yaw_target - self.sim.state.yaw)
            if abs(err) < tol:
                return True
            w = float(np.clip(2.0 * err, -1.0, 1.0))
            cmd = Commands(-w * g.track_width / 2, w * g.track_width / 2,
                           np.zeros(g.wheel_pairs))
            self._tick(cmd)
            if self.failsafe.status.triggered:
                return False
        return False

    def _drive_path(self, waypoints: np.ndarray, tool: TaskSpec | None = None,
                    tags: list[str] | None = None) -> bool:
        tracker = PurePursuitTracker(waypoints, self.pursuit, self.sim.geom.track_width)
        g = self.sim.geom
        while not self._timed_out():
            s = self.sim.state
            out = tracker.tick(s.x, s.y, s.yaw, self.spec.speed, s.omega)
            if out["done"]:
                return True
            self._apply_tool(tool, out, tags, tracker)
            cmd = Commands(out["v_l"], out["v_r"], np.zeros(g.wheel_pairs))
            self._tick(cmd)
            if self.failsafe.status.triggered:
                return False
        return False

    def _apply_tool(self, tool: TaskSpec | None, out: dict,
                    tags: list[str] | None, tracker: PurePursuitTracker) -> None:
        s = self.sim.state
        on_row = True
        if tags is not None:
            k = int(np.searchsorted(tracker.cum, out["arc"], side="right") - 1)
            k = min(k, len(tags) - 1)
            on_row = tags[k].startswith("row")
        if tool is None or not on_row:
            self.sprayer.tick("off")
            s.tool_state["sprayer"] = "off"
            s.tool_state["seeder_rate"] = 0.0
            s.tool_state["plough"] = "up"
            return
        if tool.kind in ("water", "pesticide"):
            st = self.sprayer.tick(tool.kind, tool.duty)
            s.tool_state["sprayer"] = tool.kind if (st.valve_water or st.valve_pesticide) else "off"
        elif tool.kind == "sow":
            params = SeederParams(seed_spacing=tool.seed_spacing)
            _, pulses = control.seed_rate(abs(s.v), params)
            s.tool_state["seeder_rate"] = pulses
        elif tool.kind == "plough":
            s.tool_state["plough"] = "down"

    # -- mission pieces --------------------------------------------------------

    def _run_step_tasks(self, step_idx: int) -> bool:
        profile = self.sim.profile
        j = self.sim.state.on_step
        if j < 1 or j > profile.n_steps:
            raise MissionError(f"robot is not on a planned tread (step {j})")
        wall_x = profile.riser_base_x(j) + profile.steps[j - 1].run
        ys = np.linspace(self.spec.y_span[0], self.spec.y_span[1], 9)
        width = min(profile.width_at(j, float(yy)) for yy in ys)
        plan = plan_rows(
            self.spec.n_crop_rows, wall_x, width, self.spec.y_span, self.sim.geom,
            self.spec.wall_margin, self.spec.edge_margin, self.spec.row_spacing,
        )
        tasks = self.spec.strategy.tasks_for(step_idx) or (TaskSpec("none"),)
        tags = [t for _, _, t in plan.waypoints]
        for task in tasks:
            self.loc.crop_row = 0
            self._event(f"task_start:{task.kind}:step{step_idx}")
            entry = np.array([[self.sim.state.x, self.sim.state.y],
                              [plan.waypoints[0][0], plan.waypoints[0][1]]])
            if np.hypot(*(entry[1] - entry[0])) > 0.05:
                if not self._drive_path(entry):
                    return False
                self._rotate_to(plan.entry_heading())
            if not self._drive_path(plan.path(), tool=task, tags=tags):
                return False
            self.sprayer.tick("off")
            self.sim.state.tool_state["sprayer"] = "off"
            self.sim.state.tool_state["seeder_rate"] = 0.0
            self.sim.state.tool_state["plough"] = "up"
            self._event(f"task_done:{task.kind}:step{step_idx}")
        return True

    def _climb_next(self) -> bool:
        profile = self.sim.profile
        j = self.sim.state.on_step
        rise = profile.steps[j].rise  # step j+1 spec (0-based list)
        wall_x = profile.riser_base_x(j + 1)
        stage = np.array([
            [self.sim.state.x, self.sim.state.y],
            [wall_x - self.spec.climb_standoff, self.sim.state.y],
        ])
        self._event(f"climb_request:rise={rise:.2f}")
        if np.hypot(*(stage[1] - stage[0])) > 0.05:
            if not self._drive_path(stage):
                return False
        if not self._rotate_to(0.0):
            return False
        fsm = ClimbUpFsm(self.sim.geom, self.sim.cfg, expected_rise=rise,
                         stroke_budget=self.sim.stroke_budget, dt=self.sim.dt)
        self._phase_label = "climb:align"
        while not fsm.done and not self._timed_out():
            frame = self.sim.sense()
            self.failsafe.suppressed = {"F_f", "F_b"}
            self.failsafe.update(frame)
            cmd = fsm.tick(self.sim.state, frame)
            cmd = self.failsafe.gate(cmd)
            if self.failsafe.status.triggered:
                self._event(f"failsafe:{self.failsafe.status.triggered_by}")
                return False
            self._phase_label = f"climb:{fsm.phase.value}"
            self.sim.step(cmd)
            ok, margin = stability_check(self.sim.state, self.sim.geom)
            if not ok:
                raise TipOverError(f"climb lost stability (margin {margin:.3f})")
            if self.trace_hook is not None:
                self.trace_hook(self.sim.state, frame, self._phase_label)
        self.failsafe.suppressed = set()
        self._phase_label = "idle"
        for ev in fsm.events:
            self.events.append((ev.t, f"phase:{ev.phase_from}->{ev.phase_to}"))
        if fsm.done:
            self.climbs += 1
            self._event("climb_done")
            return True
        return False

    def run(self) -> MissionResult:
        """Execute tasks step by step, climbing until the top tread."""
        profile = self.sim.profile
        try:
            step_idx = 0
            while True:
                self._phase_label = f"rows:step{step_idx}"
                if not self._run_step_tasks(step_idx):
                    break
                if self.sim.state.on_step >= profile.n_steps:
                    return MissionResult("complete", 0, self.events, self.climbs, self.loc)
                if not self._climb_next():
                    break
                step_idx += 1
            if self.failsafe.status.triggered:
                return MissionResult("failsafe", 1, self.events, self.climbs, self.loc)
            return MissionResult("timeout", 5, self.events, self.climbs, self.loc)
        except TipOverError:
            return MissionResult("tipover", 4, self.events, self.climbs, self.loc)


def _wrap(angle: float) -> float:
    return math.atan2(math.sin(angle), math.cos(angle))
