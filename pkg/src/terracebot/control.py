"""Low-level control laws: lift pitch regulation, path tracking, farm tools.

Pitch is regulated by a PID on the differential actuator channel while the
sum channel holds the commanded ascent rate; the gains can self-tune with a
filtered-error gradient rule.  Path tracking is pure pursuit with a
velocity-scaled look-ahead and an optional yaw-rate damping term against
side slip.  The seeder maps ground speed to stepper pulse rate; the sprayer
is a break-before-make valve selector.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .world import Commands, PitchPlant

MAX_STEER = math.radians(40.0)


class ControlError(ValueError):
    pass


# ---------------------------------------------------------------------------
# Pitch control


@dataclass
class PitchPid:
    """PID on the actuator difference, ascent-rate hold on the sum.

        A_f - A_b = k_p e + k_i * integral(e) + k_d * de/dt   (e = -pitch)
        A_f + A_b = c_1 - c_2 * dv

    Positive pitch is nose-up, so the error convention drives the front
    actuator slower than the back one.  When gamma rates are non-zero the
    gains follow a filtered-error gradient rule:

        k_p += gamma_p * (e - e_m);  k_i += gamma_i * e_m;
        k_d += gamma_d * (de - de_m)

    with e_m, de_m first-order low-passed (time constant tau_filter) and all
    gains clamped to [0, gain_cap].  With every gamma zero this is exactly a
    fixed-gain PID.
    """

    k_p: float = 2.0
    k_i: float = 0.0
    k_d: float = 1.0
    gamma_p: float = 0.0
    gamma_i: float = 0.0
    gamma_d: float = 0.0
    c_1: float = 0.04  # m/s, total nominal ascent rate
    c_2: float = 0.5
    gain_cap: float = 50.0
    tau_filter: float = 0.2  # s
    rate_limit: float = 0.05  # m/s per actuator

    integral: float = 0.0
    e_m: float = 0.0
    edot_m: float = 0.0
    _prev_e: float | None = None

    def adapt_gains(self, e: float, edot: float, dt: float) -> None:
        alpha = dt / (self.tau_filter + dt)
        self.e_m += alpha * (e - self.e_m)
        self.edot_m += alpha * (edot - self.edot_m)
        cap = self.gain_cap
        self.k_p = min(max(self.k_p + self.gamma_p * (e - self.e_m), 0.0), cap)
        self.k_i = min(max(self.k_i + self.gamma_i * self.e_m, 0.0), cap)
        self.k_d = min(max(self.k_d + self.gamma_d * (edot - self.edot_m), 0.0), cap)

    def tick(self, pitch: float, dv: float, dt: float) -> tuple[float, float]:
        """Front/back actuator rates for one control period."""
        if dt <= 0.0:
            raise ControlError("dt must be positive")
        e = -pitch
        edot = 0.0 if self._prev_e is None else (e - self._prev_e) / dt
        self._prev_e = e
        if self.gamma_p or self.gamma_i or self.gamma_d:
            self.adapt_gains(e, edot, dt)
        self.integral += e * dt
        diff = self.k_p * e + self.k_i * self.integral + self.k_d * edot
        total = self.c_1 - self.c_2 * dv
        return self.saturate(diff, total)

    def saturate(self, diff: float, total: float) -> tuple[float, float]:
        """Solve the two channels, keeping the pitch correction when the
        actuator rate limits bind (safety over ascent speed)."""
        lim = self.rate_limit
        diff = min(max(diff, -2.0 * lim), 2.0 * lim)
        room = 2.0 * lim - abs(diff)
        total = min(max(total, -room), room)
        a_f = 0.5 * (total + diff)
        a_b = 0.5 * (total - diff)
        return a_f, a_b


@dataclass
class PitchTrace:
    t: np.ndarray
    pitch: np.ndarray
    k_p: np.ndarray
    k_i: np.ndarray
    k_d: np.ndarray


def run_pitch_experiment(
    pid: PitchPid,
    payload_torque: float = 5.0,
    payload_on: float = 1.0,
    duration: float = 15.0,
    dt: float = 0.02,
    plant: PitchPlant | None = None,
) -> PitchTrace:
    """Closed-loop lift with a payload-torque step, returning the pitch trace.

    The plant starts level with both stacks half-extended so the regulator
    works about an interior operating point.
    """
    plant = plant or PitchPlant(ext_f=0.1, ext_b=0.1)
    n = int(round(duration / dt))
    ts = np.zeros(n)
    th = np.zeros(n)
    kp = np.zeros(n)
    ki = np.zeros(n)
    kd = np.zeros(n)
    for k in range(n):
        t = k * dt
        tau = payload_torque if t >= payload_on else 0.0
        a_f, a_b = pid.tick(plant.theta, 0.0, dt)
        plant.step(a_f, a_b, dt, tau_dist=tau)
        ts[k] = t + dt
        th[k] = plant.theta
        kp[k], ki[k], kd[k] = pid.k_p, pid.k_i, pid.k_d
    return PitchTrace(ts, th, kp, ki, kd)


# ---------------------------------------------------------------------------
# Pure pursuit


@dataclass(frozen=True)
class PursuitParams:
    l_0: float = 0.5  # m, base look-ahead
    beta: float = 0.3  # s, velocity gain of the look-ahead
    k_dyaw: float = 0.0  # rad per rad/s of yaw-rate error (damped variant)
    wheelbase: float = 0.6  # m, geometric L of the steering abstraction

    def look_ahead(self, v: float) -> float:
        return self.l_0 + self.beta * abs(v)


def pursuit_steer(
    alpha: float, v: float, r_ref: float, r: float, params: PursuitParams
) -> float:
    """Steering angle toward a goal at central angle alpha, clamped +-40 deg.

    The damping term k_dyaw * (r_ref - r) opposes yaw-rate error from side
    slip; with k_dyaw = 0 this is plain pure pursuit.
    """
    l_d = params.look_ahead(v)
    if l_d <= 0.0:
        raise ControlError("look-ahead must be positive")
    delta = math.atan(2.0 * params.wheelbase * math.sin(alpha) / l_d)
    delta += params.k_dyaw * (r_ref - r)
    return min(max(delta, -MAX_STEER), MAX_STEER)


def wheel_speeds(v: float, alpha: float, l_d: float, wheelbase: float) -> tuple[float, float]:
    """Left/right wheel speeds for the pursuit turn; mean is exactly v."""
    if l_d <= 0.0:
        raise ControlError("look-ahead must be positive")
    omega = 2.0 * v * math.sin(alpha) / l_d
    return v - omega * wheelbase / 2.0, v + omega * wheelbase / 2.0


def wheel_speeds_from_steer(
    v: float, delta: float, wheelbase: float, track_width: float
) -> tuple[float, float]:
    """Wheel split realising a steering angle on the differential drive."""
    omega = v * math.tan(delta) / wheelbase
    return v - omega * track_width / 2.0, v + omega * track_width / 2.0


class PurePursuitTracker:
    """Track a polyline path at constant speed with (damped) pure pursuit."""

    def __init__(self, waypoints: np.ndarray, params: PursuitParams,
                 track_width: float = 0.6) -> None:
        pts = np.atleast_2d(np.asarray(waypoints, dtype=float))
        if pts.shape[0] < 2:
            raise ControlError("need at least two waypoints")
        self.pts = pts
        self.params = params
        self.track_width = track_width
        seg = np.diff(pts, axis=0)
        self.seg_len = np.hypot(seg[:, 0], seg[:, 1])
        self.cum = np.concatenate([[0.0], np.cumsum(self.seg_len)])

    def _point_at(self, s: float) -> np.ndarray:
        s = min(max(s, 0.0), self.cum[-1])
        k = int(np.searchsorted(self.cum, s, side="right") - 1)
        k = min(k, len(self.seg_len) - 1)
        frac = 0.0 if self.seg_len[k] == 0 else (s - self.cum[k]) / self.seg_len[k]
        return self.pts[k] + frac * (self.pts[k + 1] - self.pts[k])

    def project(self, x: float, y: float) -> tuple[float, float]:
        """(arc position, signed cross-track error) of the nearest path point."""
        p = np.array([x, y])
        best = (0.0, math.inf, 0.0)
        for k in range(len(self.seg_len)):
            a, b = self.pts[k], self.pts[k + 1]
            ab = b - a
            ln = self.seg_len[k]
            if ln == 0:
                continue
            u = ab / ln
            t = float(np.clip(np.dot(p - a, u), 0.0, ln))
            q = a + t * u
            d = float(np.hypot(*(p - q)))
            if d < best[1]:
                cross = float(u[0] * (p - q)[1] - u[1] * (p - q)[0])
                best = (self.cum[k] + t, d, cross)
        return best[0], best[2]

    def tick(self, x: float, y: float, yaw: float, v: float, r_meas: float) -> dict:
        """Wheel speeds plus diagnostics for the current pose."""
        s, cross = self.project(x, y)
        l_d = self.params.look_ahead(v)
        goal = self._point_at(s + l_d)
        alpha = _wrap(math.atan2(goal[1] - y, goal[0] - x) - yaw)
        delta = pursuit_steer(alpha, v, 0.0, r_meas, self.params)
        v_l, v_r = wheel_speeds_from_steer(v, delta, self.params.wheelbase,
                                           self.track_width)
        done = s >= self.cum[-1] - 1e-6
        return {"v_l": v_l, "v_r": v_r, "alpha": alpha, "delta": delta,
                "cross_track": cross, "arc": s, "done": done}


def _wrap(angle: float) -> float:
    return math.atan2(math.sin(angle), math.cos(angle))


# ---------------------------------------------------------------------------
# Seed metering


@dataclass(frozen=True)
class SeederParams:
    n_teeth: int = 10
    seed_spacing: float = 0.1  # m between seeds on the ground
    step_angle: float = math.radians(1.8)  # rad per stepper pulse
    inner_radius: float = 0.03  # m, carried for the record; not in the rate law

    def __post_init__(self) -> None:
        if self.n_teeth < 1:
            raise ControlError("n_teeth must be >= 1")
        if self.seed_spacing <= 0.0 or self.step_angle <= 0.0:
            raise ControlError("seed_spacing and step_angle must be positive")


def seed_rate(v: float, params: SeederParams, paper_form: bool = False) -> tuple[float, float]:
    """Seed-wheel speed (rev/s) and stepper pulse rate (Hz) for ground speed v.

    One seed per tooth: omega = v / (n_teeth * spacing).  The pulse rate is
    the unit-consistent p = 2*pi*omega / step_angle; paper_form=True keeps
    the printed p = omega * step_angle variant for comparison only.
    """
    if v < 0.0:
        raise ControlError("ground speed must be >= 0")
    omega = v / (params.n_teeth * params.seed_spacing)
    if paper_form:
        return omega, omega * params.step_angle
    return omega, (2.0 * math.pi * omega) / params.step_angle


# ---------------------------------------------------------------------------
# Sprayer valves


SPRAYER_COMMANDS = ("off", "water", "pesticide")


@dataclass(frozen=True)
class SprayerState:
    valve_water: bool = False
    valve_pesticide: bool = False
    pump_duty: float = 0.0


class SprayerController:
    """Two normally-closed tank valves feeding one pump.

    At most one valve is open at any time and the pump only runs with
    exactly one open; switching tanks passes through a both-closed tick
    (break before make).
    """

    def __init__(self) -> None:
        self.state = SprayerState()

    def tick(self, command: str, duty: float = 1.0) -> SprayerState:
        if command not in SPRAYER_COMMANDS:
            raise ControlError(f"conflicting or unknown sprayer command {command!r}")
        if not (0.0 <= duty <= 1.0):
            raise ControlError(f"pump duty {duty} outside [0, 1]")
        cur = self.state
        if command == "off":
            new = SprayerState()
        else:
            want_water = command == "water"
            other_open = cur.valve_pesticide if want_water else cur.valve_water
            if other_open:
                new = SprayerState()  # break-before-make interlock tick
            elif want_water:
                new = SprayerState(valve_water=True, pump_duty=duty)
            else:
                new = SprayerState(valve_pesticide=True, pump_duty=duty)
        if new.valve_water and new.valve_pesticide:
            raise ControlError("both valves open")  # unreachable by construction
        self.state = new
        return new
