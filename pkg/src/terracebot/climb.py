"""Stair climb / descend state machines, alignment, stability and fail-safe.

The climb sequence mirrors the six-stage choreography: align square to the
riser, extend every stack until the chassis clears the step, drive the
forward lidar plane over the edge, then per wheel pair lift-and-advance, and
finally settle back to ride height on the upper tread.  Descent runs the
stages in reverse order with the stacks extending down to the lower tread.

Gates are lidar-driven where the readings are unambiguous (riser clearing,
edge crossing, touch-down, relative advance targets) and fall back to
odometry or actuator saturation where a fixed threshold cannot work for all
step heights; every transition is logged with the gate values that fired.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np

from . import scissor
from .world import Commands, RobotGeometry, RobotState, SensorFrame


class ClimbError(RuntimeError):
    pass


class InfeasibleStepError(ClimbError):
    """Requested rise exceeds the lift the stroke budget can deliver."""


class MisalignmentError(ClimbError):
    """Front lidar pair disagrees too much to trust a range gate."""


class AlignTimeoutError(ClimbError):
    """Yaw alignment did not converge within the time budget."""


def sudden_change(series, threshold: float = 0.05) -> bool:
    """True when the last two samples differ by more than the threshold."""
    if len(series) < 2:
        raise ValueError("need at least two samples")
    return abs(series[-1] - series[-2]) > threshold


def sudden_increase(prev: float, curr: float, threshold: float = 0.05) -> bool:
    return curr - prev > threshold


class Phase(enum.Enum):
    ALIGN = "align"
    LIFT_ALL = "lift_all"
    ADVANCE_OVER_EDGE = "advance_over_edge"
    LIFT_PAIR = "lift_pair"
    ADVANCE_PAIR = "advance_pair"
    # descent-only phases
    APPROACH_EDGE = "approach_edge"
    ADVANCE_TO_EDGE = "advance_to_edge"
    EXTEND_PAIR = "extend_pair"
    FINAL_ADVANCE = "final_advance"
    # shared tail
    SETTLE = "settle"
    DONE = "done"


@dataclass(frozen=True)
class ClimbParams:
    drive_speed: float = 0.15  # m/s during climb phases
    align_tol: float = 0.003  # m difference between the pair readings
    align_gain: float = 2.0  # rad/s per metre of pair difference
    align_timeout: float = 30.0  # s
    jump_threshold: float = 0.05  # m, sudden-change gate
    lift_margin: float = 0.03  # extra chassis lift above the measured rise
    touch_tol: float = 0.001  # m, wheel touch-down band (descent)
    sat_tol: float = 1e-6  # m, actuator saturation band
    follow_range: float = 3.0  # m, max range at which a riser counts as seen
    pair_mismatch: float = 0.10  # m, abort threshold for L_fl vs L_fr


@dataclass
class PhaseEvent:
    t: float
    phase_from: str
    phase_to: str
    gates: dict


@dataclass
class FailsafeStatus:
    armed: bool = True
    triggered: bool = False
    triggered_by: str | None = None
    safe_inset: float = 0.12


class FailsafeMonitor:
    """Latching emergency stop on sudden increases of the 25-deg lidars.

    ``suppressed`` names fail-safe lidars whose jumps are sanctioned (the
    directions a climb legitimately crosses an edge); everything else stays
    armed.  Once triggered the monitor zeroes every command until reset().
    """

    SYMBOLS = ("F_f", "F_b", "F_l", "F_r")

    def __init__(self, geom: RobotGeometry, threshold: float = 0.05) -> None:
        self.geom = geom
        self.threshold = threshold
        self.status = FailsafeStatus(safe_inset=geom.safe_inset)
        self.suppressed: set[str] = set()
        self._prev: dict[str, float] = {}

    def reset(self) -> None:
        self.status = FailsafeStatus(safe_inset=self.geom.safe_inset)
        self._prev.clear()

    def update(self, frame: SensorFrame) -> FailsafeStatus:
        if not self.status.armed or self.status.triggered:
            return self.status
        for sym in self.SYMBOLS:
            curr = frame.clamped(sym, self.geom.max_lidar_range)
            prev = self._prev.get(sym)
            self._prev[sym] = curr
            if prev is None or sym in self.suppressed:
                continue
            if sudden_increase(prev, curr, self.threshold):
                self.status.triggered = True
                self.status.triggered_by = sym
                break
        return self.status

    def gate(self, cmd: Commands) -> Commands:
        """Pass commands through, or zero them after a trigger (latched)."""
        if self.status.triggered:
            return Commands.zero(len(cmd.act_rates))
        return cmd


def stability_check(state: RobotState, geom: RobotGeometry) -> tuple[bool, float]:
    """COM ground-projection inside the contact hull, with signed margin.

    Contacts are (x, y) world points; the hull in the robot frame is the
    rectangle spanned by contact stations and the two track sides, so the
    margin is the smallest COM-to-edge distance (negative outside).
    """
    if not state.contacts:
        return False, -math.inf
    cy, sy = math.cos(state.yaw), math.sin(state.yaw)
    xs, ys = [], []
    for px, py in state.contacts:
        xs.append((px - state.x) * cy + (py - state.y) * sy)
        ys.append(-(px - state.x) * sy + (py - state.y) * cy)
    margin = min(-min(xs), max(xs), -min(ys), max(ys))
    return margin > 0.0, margin


class AlignController:
    """Rotate in place until a lidar pair reads equal (square to a plane)."""

    def __init__(
        self,
        pair: tuple[str, str],
        separation: float,
        params: ClimbParams,
        wheel_pairs: int = 2,
    ) -> None:
        self.pair = pair
        self.separation = separation
        self.params = params
        self.wheel_pairs = wheel_pairs
        self._t0: float | None = None

    def tick(self, frame: SensorFrame, track_width: float) -> Commands | None:
        """Rotation command, or None once aligned.  Raises on timeout."""
        if self._t0 is None:
            self._t0 = frame.t
        a = frame.lidar[self.pair[0]]
        b = frame.lidar[self.pair[1]]
        if not (math.isfinite(a) and math.isfinite(b)):
            if frame.t - self._t0 > self.params.align_timeout:
                raise AlignTimeoutError(f"{self.pair} never both returned within "
                                        f"{self.params.align_timeout} s")
            # Rotate slowly searching for the plane.
            w = 0.2
            return Commands(-w * track_width / 2, w * track_width / 2,
                            np.zeros(self.wheel_pairs))
        diff = a - b
        if abs(diff) < self.params.align_tol:
            return None
        if frame.t - self._t0 > self.params.align_timeout:
            raise AlignTimeoutError(f"|{self.pair[0]} - {self.pair[1]}| = {abs(diff):.4f} m "
                                    f"after {self.params.align_timeout} s")
        w = -self.params.align_gain * diff
        return Commands(-w * track_width / 2, w * track_width / 2, np.zeros(self.wheel_pairs))


class _FsmBase:
    def __init__(
        self,
        geom: RobotGeometry,
        cfg: scissor.ScissorConfig,
        stroke_budget: float,
        params: ClimbParams | None = None,
    ) -> None:
        self.geom = geom
        self.cfg = cfg
        self.params = params or ClimbParams()
        self.stroke_budget = stroke_budget
        self.ext_min = scissor.actuator_length(cfg, cfg.theta_min)
        self.ext_max = self.ext_min + stroke_budget
        self.max_lift = scissor.max_lift(cfg, stroke_budget)
        self.events: list[PhaseEvent] = []
        self.phase = Phase.ALIGN
        self.pair_index = 0  # 1-based while in a per-pair phase
        self._prev: dict[str, float] = {}
        self._odo = 0.0
        self._target_reading: float | None = None
        self._target_odo: float | None = None

    # helpers ---------------------------------------------------------------

    def _transition(self, frame: SensorFrame, to: Phase, **gates) -> None:
        self.events.append(PhaseEvent(frame.t, self.phase.value, to.value, gates))
        self.phase = to
        self._target_reading = None
        self._target_odo = None
        self._odo = 0.0

    def _clamped(self, frame: SensorFrame, sym: str) -> float:
        return frame.clamped(sym, self.geom.max_lidar_range)

    def _front_mean(self, frame: SensorFrame, pair=("L_fl", "L_fr")) -> float:
        a, b = self._clamped(frame, pair[0]), self._clamped(frame, pair[1])
        if (math.isfinite(frame.lidar[pair[0]]) and math.isfinite(frame.lidar[pair[1]])
                and abs(a - b) > self.params.pair_mismatch
                and max(a, b) < self.geom.max_lidar_range):
            raise MisalignmentError(f"{pair[0]}={a:.3f} vs {pair[1]}={b:.3f} m")
        return 0.5 * (a + b)

    def _drive(self, state: RobotState) -> Commands:
        v = self.params.drive_speed
        return Commands(v, v, np.zeros(self.geom.wheel_pairs))

    def _advance_gate_init(self, frame: SensorFrame, pair: tuple[str, str],
                           delta: float, moving_closer: bool) -> None:
        """Arm a relative advance target: lidar differential when the guide
        plane returns, odometry distance otherwise."""
        a, b = frame.lidar[pair[0]], frame.lidar[pair[1]]
        if (math.isfinite(a) and math.isfinite(b)
                and max(a, b) <= self.params.follow_range):
            base = self._front_mean(frame, pair)
            self._target_reading = base - delta if moving_closer else base + delta
        else:
            self._target_odo = delta

    def _advance_gate_done(self, frame: SensorFrame, pair: tuple[str, str],
                           moving_closer: bool, dt_travel: float) -> bool:
        if self._target_reading is not None:
            mean = self._front_mean(frame, pair)
            return mean <= self._target_reading if moving_closer else mean >= self._target_reading
        self._odo += dt_travel
        return self._odo >= (self._target_odo or 0.0)


class ClimbUpFsm(_FsmBase):
    """Drive one full climb of a single step.

    The expected rise is validated against the stroke budget before any
    command is emitted; an oversized step raises InfeasibleStepError
    immediately.  tick() consumes (state, frame) and returns the command
    for this control period.
    """

    def __init__(
        self,
        geom: RobotGeometry,
        cfg: scissor.ScissorConfig,
        expected_rise: float,
        stroke_budget: float = scissor.PROTOTYPE_STROKE_BUDGET,
        params: ClimbParams | None = None,
        dt: float = 0.02,
    ) -> None:
        super().__init__(geom, cfg, stroke_budget, params)
        self.dt = dt
        self.expected_rise = expected_rise
        if expected_rise > self.max_lift + 1e-9:
            raise InfeasibleStepError(
                f"step rise {expected_rise:.3f} m exceeds max lift {self.max_lift:.3f} m"
            )
        if expected_rise <= 0.0:
            raise ClimbError("expected_rise must be positive")
        self._align = AlignController(("L_fl", "L_fr"), geom.track_width, self.params,
                                      geom.wheel_pairs)
        self._riser_seen = False
        self.rise_pre = expected_rise  # refined by the lidar latch when possible
        self.rise_measured: float | None = None

    @property
    def done(self) -> bool:
        return self.phase is Phase.DONE

    def tick(self, state: RobotState, frame: SensorFrame) -> Commands:
        p = self.params
        g = self.geom
        zero = Commands.zero(g.wheel_pairs)

        if self.phase is Phase.ALIGN:
            fl, fr = frame.lidar["L_fl"], frame.lidar["L_fr"]
            visible = (math.isfinite(fl) and fl <= p.follow_range
                       and math.isfinite(fr) and fr <= p.follow_range)
            if not visible:
                # Riser below the corner lidars (low step) or out of range:
                # nothing to square against, proceed on the requested rise.
                self._transition(frame, Phase.LIFT_ALL, riser_seen=False)
                self._riser_seen = False
                return zero
            cmd = self._align.tick(frame, g.track_width)
            if cmd is not None:
                return cmd
            self._riser_seen = True
            self._prev["front"] = self._front_mean(frame)
            self._transition(frame, Phase.LIFT_ALL, riser_seen=True,
                             front=self._prev["front"])
            return zero

        if self.phase is Phase.LIFT_ALL:
            rates = np.full(g.wheel_pairs, g.max_actuator_rate)
            if self._riser_seen:
                front = self._front_mean(frame)
                prev = self._prev.get("front", front)
                self._prev["front"] = front
                if sudden_increase(prev, front, p.jump_threshold):
                    # Chassis front just cleared the riser top; latch the
                    # step height from the downward lidar (stepHeight =
                    # L_df + d_hb, so the rise itself is the L_df reading).
                    self.rise_pre = frame.lidar["L_df"]
                    self._riser_seen = False
                    self.events.append(PhaseEvent(frame.t, self.phase.value,
                                                  self.phase.value,
                                                  {"latched_rise": self.rise_pre}))
                return Commands(0.0, 0.0, rates)
            target = g.d_hb + self.rise_pre + p.lift_margin
            l_df = frame.lidar["L_df"]
            saturated = bool(np.all(state.scissor_ext >= self.ext_max - p.sat_tol))
            if l_df > target or saturated:
                if saturated and l_df < g.d_hb + self.rise_pre - 1e-6:
                    raise InfeasibleStepError(
                        f"stacks saturated at L_df={l_df:.3f} m but need "
                        f"{g.d_hb + self.rise_pre:.3f} m for a {self.rise_pre:.3f} m rise"
                    )
                self._prev["ldf"] = l_df
                self._transition(frame, Phase.ADVANCE_OVER_EDGE, l_df=l_df,
                                 target=target, saturated=saturated)
                return zero
            return Commands(0.0, 0.0, rates)

        if self.phase is Phase.ADVANCE_OVER_EDGE:
            l_df = frame.lidar["L_df"]
            prev = self._prev.get("ldf", l_df)
            self._prev["ldf"] = l_df
            if prev - l_df > p.jump_threshold:
                # The downward-front ray dropped onto the upper tread: the
                # drop magnitude is the realised step rise.
                self.rise_measured = prev - l_df
                if self.rise_measured > self.max_lift + 0.02:
                    raise InfeasibleStepError(
                        f"measured rise {self.rise_measured:.3f} m exceeds lift capability"
                    )
                self.pair_index = 1
                self._transition(frame, Phase.LIFT_PAIR, rise_measured=self.rise_measured,
                                 pair=1)
                return zero
            return self._drive(state)

        if self.phase is Phase.LIFT_PAIR:
            k = self.pair_index - 1
            if state.scissor_ext[k] <= self.ext_min + p.sat_tol:
                self._advance_gate_init(frame, ("L_fl", "L_fr"), g.d_of + g.d_ob,
                                        moving_closer=True)
                self._transition(frame, Phase.ADVANCE_PAIR, pair=self.pair_index,
                                 l_di=frame.lidar[f"L_d{self.pair_index}"])
                return zero
            rates = np.zeros(g.wheel_pairs)
            rates[k] = -g.max_actuator_rate
            return Commands(0.0, 0.0, rates)

        if self.phase is Phase.ADVANCE_PAIR:
            if self._advance_gate_done(frame, ("L_fl", "L_fr"), True,
                                       abs(state.v) * self.dt):
                if self.pair_index < g.wheel_pairs:
                    self.pair_index += 1
                    self._transition(frame, Phase.LIFT_PAIR, pair=self.pair_index)
                else:
                    self._transition(frame, Phase.SETTLE)
                return zero
            return self._drive(state)

        if self.phase is Phase.SETTLE:
            if bool(np.all(state.scissor_ext <= self.ext_min + p.sat_tol)):
                self._transition(frame, Phase.DONE, l_df=frame.lidar["L_df"])
                return zero
            return Commands(0.0, 0.0, np.full(g.wheel_pairs, -g.max_actuator_rate))

        return zero


class ClimbDownFsm(_FsmBase):
    """Descend one step, mirroring the climb stages in reverse.

    The robot must already face the drop.  Per pair: bring the pair just
    past the edge, extend its stack until the wheels touch the lower tread,
    then advance; a final advance clears the trailing dummies off the upper
    tread before every stack settles back to ride height.
    """

    def __init__(
        self,
        geom: RobotGeometry,
        cfg: scissor.ScissorConfig,
        expected_drop: float,
        stroke_budget: float = scissor.PROTOTYPE_STROKE_BUDGET,
        params: ClimbParams | None = None,
        dt: float = 0.02,
    ) -> None:
        super().__init__(geom, cfg, stroke_budget, params)
        self.dt = dt
        self.expected_drop = expected_drop
        if expected_drop > self.max_lift + 1e-9:
            raise InfeasibleStepError(
                f"step drop {expected_drop:.3f} m exceeds max lift {self.max_lift:.3f} m"
            )
        if expected_drop <= 0.0:
            raise ClimbError("expected_drop must be positive")
        self._align = AlignController(("L_bl", "L_br"), geom.track_width, self.params,
                                      geom.wheel_pairs)
        self.drop_measured: float | None = None

    @property
    def done(self) -> bool:
        return self.phase is Phase.DONE

    def tick(self, state: RobotState, frame: SensorFrame) -> Commands:
        p = self.params
        g = self.geom
        zero = Commands.zero(g.wheel_pairs)

        if self.phase is Phase.ALIGN:
            bl, br = frame.lidar["L_bl"], frame.lidar["L_br"]
            visible = (math.isfinite(bl) and bl <= p.follow_range
                       and math.isfinite(br) and br <= p.follow_range)
            if not visible:
                self._prev["ldf"] = frame.lidar["L_df"]
                self._transition(frame, Phase.APPROACH_EDGE, riser_seen=False)
                return zero
            cmd = self._align.tick(frame, g.track_width)
            if cmd is not None:
                return cmd
            self._prev["ldf"] = frame.lidar["L_df"]
            self._transition(frame, Phase.APPROACH_EDGE, riser_seen=True)
            return zero

        if self.phase is Phase.APPROACH_EDGE:
            l_df = frame.lidar["L_df"]
            prev = self._prev.get("ldf", l_df)
            self._prev["ldf"] = l_df
            if l_df - prev > p.jump_threshold:
                self.drop_measured = l_df - prev
                if self.drop_measured > self.max_lift + 0.02:
                    raise InfeasibleStepError(
                        f"measured drop {self.drop_measured:.3f} m exceeds lift capability"
                    )
                self._target_odo = g.down_lidar_x - g.wheelbase / 2 + 0.02
                self._transition(frame, Phase.ADVANCE_TO_EDGE,
                                 drop_measured=self.drop_measured)
                return zero
            return self._drive(state)

        if self.phase is Phase.ADVANCE_TO_EDGE:
            self._odo += abs(state.v) * self.dt
            if self._odo >= (self._target_odo or 0.0):
                self.pair_index = 1
                self._transition(frame, Phase.EXTEND_PAIR, pair=1)
                return zero
            return self._drive(state)

        if self.phase is Phase.EXTEND_PAIR:
            k = self.pair_index - 1
            l_di = frame.lidar[f"L_d{self.pair_index}"]
            if l_di < g.d_hb + p.touch_tol:
                if self.pair_index < g.wheel_pairs:
                    self._advance_gate_init(frame, ("L_bl", "L_br"), g.d_of + g.d_ob,
                                            moving_closer=False)
                    self._transition(frame, Phase.ADVANCE_PAIR, pair=self.pair_index,
                                     l_di=l_di)
                else:
                    self._target_odo = g.d_of + g.d_ob
                    self._transition(frame, Phase.FINAL_ADVANCE, l_di=l_di)
                return zero
            if state.scissor_ext[k] >= self.ext_max - p.sat_tol:
                raise InfeasibleStepError(
                    f"pair {self.pair_index} saturated before touching down "
                    f"(L_d{self.pair_index}={l_di:.3f} m)"
                )
            rates = np.zeros(g.wheel_pairs)
            rates[k] = g.max_actuator_rate
            return Commands(0.0, 0.0, rates)

        if self.phase is Phase.ADVANCE_PAIR:
            if self._advance_gate_done(frame, ("L_bl", "L_br"), False,
                                       abs(state.v) * self.dt):
                self.pair_index += 1
                self._transition(frame, Phase.EXTEND_PAIR, pair=self.pair_index)
                return zero
            return self._drive(state)

        if self.phase is Phase.FINAL_ADVANCE:
            self._odo += abs(state.v) * self.dt
            if self._odo >= (self._target_odo or 0.0):
                self._transition(frame, Phase.SETTLE)
                return zero
            return self._drive(state)

        if self.phase is Phase.SETTLE:
            if frame.lidar["L_db"] < g.d_hb + p.touch_tol or bool(
                np.all(state.scissor_ext <= self.ext_min + p.sat_tol)
            ):
                self._transition(frame, Phase.DONE, l_db=frame.lidar["L_db"])
                return zero
            return Commands(0.0, 0.0, np.full(g.wheel_pairs, -g.max_actuator_rate))

        return zero
