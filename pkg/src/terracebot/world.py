"""Deterministic 2.5-D terrace world: staircase terrain, lidar raycasts,
and quasi-static robot kinematics.

World frame: x points uphill (each riser increases ground height), y runs
along the terrace, z is up.  Robot frame: x forward, y left, z up; yaw is the
heading against world +x.  The terrain is a staircase whose treads may narrow
along y (the usable width between the wall above and the drop edge), plus
optional rectangular voids for hazard scenarios.

The robot is a rigid chassis carried by powered wheel pairs (each on its own
scissor stack) and free-rolling dummy-wheel pairs.  Chassis height resolves
quasi-statically: it rests on the support demanding the highest position, and
elements within a small tolerance of that height count as ground contacts.
Chassis pitch is treated as zero in this supported mode; the dedicated
second-order pitch plant used by the lift controllers lives in PitchPlant.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from . import scissor
from .scissor import ScissorConfig

DEG = math.pi / 180.0
NO_RETURN = math.inf


class WorldError(ValueError):
    """Invalid terrain or robot specification."""


class TipOverError(RuntimeError):
    """Centre of mass left the support polygon."""


class CollisionError(RuntimeError):
    """A grounded element was driven into a riser face."""


# ---------------------------------------------------------------------------
# Terrain


@dataclass(frozen=True)
class StepSpec:
    rise: float  # m, riser height up to this tread
    run: float  # m, tread depth in the climb (x) direction
    # Optional usable-width profile along y: [(y, width)] knots, piecewise
    # linear, constant beyond the ends.  None means the full run everywhere.
    width_knots: tuple[tuple[float, float], ...] | None = None


@dataclass(frozen=True)
class VoidSpec:
    """Rectangular pit in a tread (missing-step hazard)."""

    x0: float
    x1: float
    y0: float
    y1: float
    depth: float = 5.0

    def contains(self, x: float, y: float) -> bool:
        return self.x0 <= x <= self.x1 and self.y0 <= y <= self.y1


@dataclass(frozen=True)
class TerraceProfile:
    steps: tuple[StepSpec, ...]
    wall_side: str = "right"  # side of the ascending wall when travelling +y
    voids: tuple[VoidSpec, ...] = ()

    def __post_init__(self) -> None:
        for s in self.steps:
            if not (0.0 < s.rise <= 0.5):
                raise WorldError(f"step rise {s.rise} outside (0, 0.5]")
            if s.run <= 0.0:
                raise WorldError(f"step run {s.run} must be positive")
            if s.width_knots is not None:
                if len(s.width_knots) < 1:
                    raise WorldError("width_knots must have at least one knot")
                ys = [k[0] for k in s.width_knots]
                if ys != sorted(ys):
                    raise WorldError("width knots must be sorted by y")
                for _, w in s.width_knots:
                    if not (0.0 < w <= s.run + 1e-9):
                        raise WorldError(f"width {w} outside (0, run={s.run}]")
        if self.wall_side not in ("left", "right"):
            raise WorldError(f"wall_side must be left or right, got {self.wall_side}")

    @staticmethod
    def flat() -> "TerraceProfile":
        """Unbounded flat ground (a single tall-run step never reached)."""
        return TerraceProfile(steps=())

    @property
    def n_steps(self) -> int:
        return len(self.steps)

    def riser_base_x(self, j: int) -> float:
        """Nominal x of riser j (1-based); riser 1 sits at x = 0."""
        return sum(s.run for s in self.steps[: j - 1])

    def tread_z(self, j: int) -> float:
        """Tread height of step j (step 0 is the base at z = 0)."""
        return sum(s.rise for s in self.steps[:j])

    def width_at(self, j: int, y: float) -> float:
        s = self.steps[j - 1]
        if s.width_knots is None:
            return s.run
        return _piecewise(s.width_knots, y)

    def edge_x(self, j: int, y: float) -> float:
        """Effective x of step j's drop edge (its riser face position).

        The usable width is anchored at the wall above (x of riser j+1),
        so narrowing eats into the tread from the drop side.
        """
        wall = self.riser_base_x(j) + self.steps[j - 1].run
        return wall - self.width_at(j, y)

    def step_at(self, x: float, y: float) -> int:
        """Index of the tread under (x, y), ignoring voids (0 = base)."""
        for j in range(self.n_steps, 0, -1):
            if x >= self.edge_x(j, y):
                return j
        return 0

    def ground_height(self, x: float, y: float) -> float:
        j = self.step_at(x, y)
        z = self.tread_z(j)
        for v in self.voids:
            if v.contains(x, y):
                return z - v.depth
        return z


def _piecewise(knots: tuple[tuple[float, float], ...], y: float) -> float:
    if y <= knots[0][0]:
        return knots[0][1]
    if y >= knots[-1][0]:
        return knots[-1][1]
    for (y0, w0), (y1, w1) in zip(knots, knots[1:]):
        if y0 <= y <= y1:
            if y1 == y0:
                return w1
            return w0 + (w1 - w0) * (y - y0) / (y1 - y0)
    return knots[-1][1]


def _edge_pieces(profile: TerraceProfile, j: int):
    """Linear pieces (ya, yb, alpha, beta) of edge_x(j, y) = alpha + beta*y."""
    s = profile.steps[j - 1]
    wall = profile.riser_base_x(j) + s.run
    if s.width_knots is None or len(s.width_knots) == 1:
        w = s.run if s.width_knots is None else s.width_knots[0][1]
        return [(-math.inf, math.inf, wall - w, 0.0)]
    pieces = []
    k = s.width_knots
    pieces.append((-math.inf, k[0][0], wall - k[0][1], 0.0))
    for (y0, w0), (y1, w1) in zip(k, k[1:]):
        if y1 == y0:
            continue
        beta = -(w1 - w0) / (y1 - y0)
        alpha = (wall - w0) - beta * y0
        pieces.append((y0, y1, alpha, beta))
    pieces.append((k[-1][0], math.inf, wall - k[-1][1], 0.0))
    return pieces


def raycast(
    origin: tuple[float, float, float],
    direction: tuple[float, float, float],
    profile: TerraceProfile,
    max_range: float = 10.0,
) -> float:
    """Distance along a unit ray to the first terrain surface, or inf.

    Exact analytic intersection with tread planes, riser faces (vertical,
    ruled by the width profile) and void floors.  Void side walls are not
    modelled; voids are probed by downward-looking rays in practice.
    """
    ox, oy, oz = origin
    dx, dy, dz = direction
    norm = math.sqrt(dx * dx + dy * dy + dz * dz)
    if abs(norm - 1.0) > 1e-9:
        raise WorldError(f"direction must be a unit vector, |d|={norm}")
    best = math.inf
    eps = 1e-9

    # Tread planes (step j = 0..n, step 0 is the base plane z = 0).
    if dz != 0.0:
        for j in range(profile.n_steps + 1):
            z = profile.tread_z(j)
            t = (z - oz) / dz
            if t <= eps or t >= best:
                continue
            px, py = ox + t * dx, oy + t * dy
            if profile.step_at(px, py) != j:
                continue
            if any(v.contains(px, py) for v in profile.voids):
                continue
            best = t
        # Void floors.
        for v in profile.voids:
            zj = profile.tread_z(profile.step_at(0.5 * (v.x0 + v.x1), 0.5 * (v.y0 + v.y1)))
            t = (zj - v.depth - oz) / dz
            if t <= eps or t >= best:
                continue
            px, py = ox + t * dx, oy + t * dy
            if v.contains(px, py):
                best = t

    # Riser faces: x = alpha + beta*y between tread levels.
    for j in range(1, profile.n_steps + 1):
        z_lo = profile.tread_z(j - 1)
        z_hi = profile.tread_z(j)
        for ya, yb, alpha, beta in _edge_pieces(profile, j):
            den = dx - beta * dy
            if den == 0.0:
                continue
            t = (alpha + beta * oy - ox) / den
            if t <= eps or t >= best:
                continue
            py = oy + t * dy
            pz = oz + t * dz
            if ya - eps <= py <= yb + eps and z_lo - eps <= pz <= z_hi + eps:
                best = t

    return best if best <= max_range else NO_RETURN


# ---------------------------------------------------------------------------
# Robot


@dataclass(frozen=True)
class RobotGeometry:
    """Chassis dimensions and sensor mounting layout.

    Longitudinal stations (robot frame x, metres from centre):
    powered wheel pairs at +-wheelbase/2, a dummy pair d_ob beyond each
    powered axle, two more dummy pairs at +-mid_dummy_offset between the
    axles, the front/back downward lidars d_of behind the outer dummies,
    and the body faces body_margin beyond them.  The low-mounted width and
    fail-safe lidars sit l_db_mount above ground when the stacks are fully
    contracted; their 45 deg geometry makes the safe-zone inset equal to
    l_db_mount itself.
    """

    track_width: float = 0.6  # d_W
    wheelbase: float = 0.24
    d_ob: float = 0.15  # powered axle -> adjacent dummy axle
    d_of: float = 0.10  # forward downward-lidar plane -> leading dummy axle
    d_hb: float = 0.18  # nominal downward-lidar reading at rest
    l_db_mount: float = 0.12  # low lidar height at rest; safe inset = this * tan 45
    d_l: float = 0.5  # side-lidar longitudinal separation
    mid_dummy_offset: float = 0.06
    body_margin: float = 0.03
    wheel_pairs: int = 2
    dummy_pairs: int = 4
    mass: float = 40.0  # kg
    chassis_mass_frac: float = 0.8  # rest split evenly over wheel bogies
    max_wheel_speed: float = 1.5  # m/s
    max_actuator_rate: float = 0.05  # m/s of stroke
    max_lidar_range: float = 10.0
    contact_tol: float = 0.05  # quasi-static support tolerance

    def __post_init__(self) -> None:
        if self.wheel_pairs < 2:
            raise WorldError("wheel_pairs must be >= 2")
        for name in ("track_width", "wheelbase", "d_ob", "d_of", "d_hb",
                     "l_db_mount", "d_l", "mass"):
            if getattr(self, name) <= 0.0:
                raise WorldError(f"{name} must be positive")
        if self.l_db_mount >= self.d_hb:
            raise WorldError("l_db_mount must sit below the chassis bottom (d_hb)")

    @property
    def safe_inset(self) -> float:
        """Fail-safe zone inset from the robot edges (l_db_mount * tan 45)."""
        return self.l_db_mount * math.tan(45.0 * DEG)

    @property
    def outer_dummy_x(self) -> float:
        return self.wheelbase / 2 + self.d_ob

    @property
    def down_lidar_x(self) -> float:
        return self.outer_dummy_x - self.d_of

    @property
    def half_length(self) -> float:
        return self.outer_dummy_x + self.body_margin

    def wheel_stations(self) -> list[float]:
        """Powered-axle stations, front first, spread over the wheelbase."""
        n = self.wheel_pairs
        return [self.wheelbase / 2 - k * self.wheelbase / (n - 1) for k in range(n)]

    def dummy_stations(self) -> list[float]:
        out = [self.outer_dummy_x, self.mid_dummy_offset,
               -self.mid_dummy_offset, -self.outer_dummy_x]
        return out[: self.dummy_pairs] if self.dummy_pairs < 4 else out


def lidar_symbols(wheel_pairs: int = 2) -> list[str]:
    """Fixed sensor order: 8 corner + (N + 2) downward + 2 width + 4 fail-safe."""
    downs = [f"L_d{i}" for i in range(1, wheel_pairs + 1)] + ["L_df", "L_db"]
    return (
        ["L_fl", "L_fr", "L_bl", "L_br", "L_lf", "L_lb", "L_rf", "L_rb"]
        + downs
        + ["W_l", "W_r", "F_f", "F_b", "F_l", "F_r"]
    )


@dataclass
class RobotState:
    x: float = 0.0
    y: float = 0.0
    yaw: float = 0.0
    pitch: float = 0.0
    chassis_z: float = 0.0  # chassis bottom above world zero
    scissor_ext: np.ndarray = field(default_factory=lambda: np.zeros(2))  # pin-to-pin, m
    on_step: int = 0
    contacts: list[tuple[float, float]] = field(default_factory=list)
    v: float = 0.0
    omega: float = 0.0
    t: float = 0.0
    tool_state: dict = field(default_factory=lambda: {
        "sprayer": "off", "seeder_rate": 0.0, "plough": "up",
    })

    def copy(self) -> "RobotState":
        return replace(self, scissor_ext=self.scissor_ext.copy(),
                       contacts=list(self.contacts), tool_state=dict(self.tool_state))


@dataclass(frozen=True)
class SensorFrame:
    t: float
    lidar: dict[str, float]
    odom: tuple[float, float]  # left/right wheel increments, m
    pitch_meas: float

    def clamped(self, symbol: str, max_range: float = 10.0) -> float:
        """Reading with the no-return sentinel clamped to max range."""
        v = self.lidar[symbol]
        return max_range if math.isinf(v) else min(v, max_range)


@dataclass(frozen=True)
class NoiseSpec:
    lidar_sigma: float = 0.0  # m, additive Gaussian per sample
    seed: int = 0


@dataclass(frozen=True)
class DisturbanceSpec:
    """One plant disturbance, active inside [t_on, t_off)."""

    kind: str  # "payload_torque" | "lateral_slip" | "wheel_slip"
    magnitude: float
    t_on: float = 0.0
    t_off: float = math.inf

    def __post_init__(self) -> None:
        if self.kind not in ("payload_torque", "lateral_slip", "wheel_slip"):
            raise WorldError(f"unknown disturbance kind {self.kind!r}")
        if not math.isfinite(self.magnitude):
            raise WorldError("disturbance magnitude must be finite")

    def active(self, t: float) -> bool:
        return self.t_on <= t < self.t_off


@dataclass
class Commands:
    """Per-tick actuation: wheel speeds and per-pair actuator stroke rates."""

    v_l: float = 0.0
    v_r: float = 0.0
    act_rates: np.ndarray = field(default_factory=lambda: np.zeros(2))

    @staticmethod
    def zero(wheel_pairs: int = 2) -> "Commands":
        return Commands(0.0, 0.0, np.zeros(wheel_pairs))


# Mounting table: (symbol template, robot-frame position fn, direction fn).
_C25, _S25 = math.cos(25.0 * DEG), math.sin(25.0 * DEG)
_C45, _S45 = math.cos(45.0 * DEG), math.sin(45.0 * DEG)


class Simulator:
    """Discrete-time kinematic plant for one robot on one terrace."""

    def __init__(
        self,
        profile: TerraceProfile,
        geom: RobotGeometry | None = None,
        cfg: ScissorConfig | None = None,
        noise: NoiseSpec | None = None,
        disturbances: tuple[DisturbanceSpec, ...] = (),
        dt: float = 0.02,
        stroke_budget: float = scissor.PROTOTYPE_STROKE_BUDGET,
    ) -> None:
        if not (0.0 < dt <= 0.05):
            raise WorldError(f"dt={dt} outside (0, 0.05]")
        self.profile = profile
        self.geom = geom or RobotGeometry()
        self.cfg = cfg or scissor.PROTOTYPE_BUILD
        self.noise = noise or NoiseSpec()
        self.disturbances = tuple(disturbances)
        self.dt = dt
        self.stroke_budget = stroke_budget
        self.ext_min = scissor.actuator_length(self.cfg, self.cfg.theta_min)
        self.ext_max = self.ext_min + stroke_budget
        self.symbols = lidar_symbols(self.geom.wheel_pairs)
        self._rng = np.random.default_rng(self.noise.seed)
        self.events: list[tuple[float, str]] = []
        self.state = RobotState(scissor_ext=np.full(self.geom.wheel_pairs, self.ext_min))
        self._resolve_support(initial=True)

    # -- placement ---------------------------------------------------------

    def place(self, x: float, y: float, yaw: float) -> None:
        self.state.x, self.state.y, self.state.yaw = x, y, yaw
        self._resolve_support(initial=True)

    # -- support kinematics --------------------------------------------------

    def lifts(self) -> np.ndarray:
        """Per-pair chassis lift above the contracted posture."""
        return np.array([
            scissor.lift_from_extension(self.cfg, max(0.0, e - self.ext_min))
            for e in self.state.scissor_ext
        ])

    def _elements(self) -> list[tuple[str, float, float]]:
        """(name, station, reach below chassis bottom) for every wheel."""
        out = []
        lifts = self.lifts()
        for k, station in enumerate(self.geom.wheel_stations()):
            out.append((f"wheel{k + 1}", station, self.geom.d_hb + lifts[k]))
        for k, station in enumerate(self.geom.dummy_stations()):
            out.append((f"dummy{k + 1}", station, self.geom.d_hb))
        return out

    def _element_sites(self, station: float) -> list[tuple[float, float]]:
        s = self.state
        cy, sy = math.cos(s.yaw), math.sin(s.yaw)
        half = self.geom.track_width / 2
        return [
            (s.x + station * cy - side * sy, s.y + station * sy + side * cy)
            for side in (half, -half)
        ]

    def _resolve_support(self, initial: bool = False) -> None:
        s = self.state
        best = -math.inf
        supports = []  # (height, station, world_site)
        for name, station, reach in self._elements():
            for site in self._element_sites(station):
                h = self.profile.ground_height(*site) + reach
                supports.append((h, station, site))
                best = max(best, h)
        if not initial and best > s.chassis_z + 0.1:
            raise CollisionError(
                f"t={s.t:.2f}: support height jumped {best - s.chassis_z:.3f} m "
                "(element driven into a riser)"
            )
        s.chassis_z = best
        s.contacts = [site for h, station, site in supports
                      if best - h <= self.geom.contact_tol]
        s.on_step = self.profile.step_at(s.x, s.y)
        s.pitch = 0.0
        if not initial:
            self._check_stability()

    def stability(self) -> tuple[bool, float]:
        """COM-in-support-polygon check and signed margin (m).

        Contacts form a rectangle in the robot frame (stations x track
        sides); the margin is the COM's distance to the nearest edge,
        negative when outside.
        """
        s = self.state
        if not s.contacts:
            return False, -math.inf
        cy, sy = math.cos(s.yaw), math.sin(s.yaw)
        xs, ys = [], []
        for px, py in s.contacts:
            rx = (px - s.x) * cy + (py - s.y) * sy
            ry = -(px - s.x) * sy + (py - s.y) * cy
            xs.append(rx)
            ys.append(ry)
        lon = min(0.0 - min(xs), max(xs) - 0.0)
        lat = min(0.0 - min(ys), max(ys) - 0.0)
        margin = min(lon, lat)
        return margin > 0.0, margin

    def _check_stability(self) -> None:
        ok, margin = self.stability()
        if not ok:
            raise TipOverError(
                f"t={self.state.t:.2f}: COM outside support polygon (margin {margin:.3f} m)"
            )

    # -- sensing -------------------------------------------------------------

    def _frame_axes(self):
        s = self.state
        cp, sp = math.cos(s.pitch), math.sin(s.pitch)
        cy, sy = math.cos(s.yaw), math.sin(s.yaw)
        fwd = (cp * cy, cp * sy, sp)
        left = (-sy, cy, 0.0)
        up = (-sp * cy, -sp * sy, cp)
        return fwd, left, up

    def _mounts(self) -> dict[str, tuple[tuple[float, float, float], tuple[float, float, float]]]:
        g = self.geom
        s = self.state
        fwd, left, up = self._frame_axes()

        def world(u, v, w):
            return (
                s.x + u * fwd[0] + v * left[0] + w * up[0],
                s.y + u * fwd[1] + v * left[1] + w * up[1],
                s.chassis_z + u * fwd[2] + v * left[2] + w * up[2],
            )

        def vec(u, v, w):
            return (
                u * fwd[0] + v * left[0] + w * up[0],
                u * fwd[1] + v * left[1] + w * up[1],
                u * fwd[2] + v * left[2] + w * up[2],
            )

        half = g.track_width / 2
        face = g.half_length
        z_low = g.l_db_mount - g.d_hb  # low mounts hang below the chassis bottom
        m = {
            "L_fl": (world(face, half, 0.0), vec(1, 0, 0)),
            "L_fr": (world(face, -half, 0.0), vec(1, 0, 0)),
            "L_bl": (world(-face, half, 0.0), vec(-1, 0, 0)),
            "L_br": (world(-face, -half, 0.0), vec(-1, 0, 0)),
            "L_lf": (world(g.d_l / 2, half, 0.0), vec(0, 1, 0)),
            "L_lb": (world(-g.d_l / 2, half, 0.0), vec(0, 1, 0)),
            "L_rf": (world(g.d_l / 2, -half, 0.0), vec(0, -1, 0)),
            "L_rb": (world(-g.d_l / 2, -half, 0.0), vec(0, -1, 0)),
            "L_df": (world(g.down_lidar_x, 0.0, 0.0), (0.0, 0.0, -1.0)),
            "L_db": (world(-g.down_lidar_x, 0.0, 0.0), (0.0, 0.0, -1.0)),
            "W_l": (world(0.0, half, z_low), vec(0, _C45, -_S45)),
            "W_r": (world(0.0, -half, z_low), vec(0, -_C45, -_S45)),
            "F_f": (world(face, 0.0, z_low), vec(_C25, 0, -_S25)),
            "F_b": (world(-face, 0.0, z_low), vec(-_C25, 0, -_S25)),
            "F_l": (world(0.0, half, z_low), vec(0, _C25, -_S25)),
            "F_r": (world(0.0, -half, z_low), vec(0, -_C25, -_S25)),
        }
        # Carriage lidars ride with the wheels, offset d_hb above the contact
        # point, so they read d_hb when the wheel sits on the ground.
        lifts = self.lifts()
        for k, station in enumerate(self.geom.wheel_stations()):
            origin = world(station, 0.0, 0.0)
            reach = g.d_hb + lifts[k]
            m[f"L_d{k + 1}"] = (
                (origin[0], origin[1], origin[2] - reach + g.d_hb),
                (0.0, 0.0, -1.0),
            )
        return m

    def sense(self) -> SensorFrame:
        mounts = self._mounts()
        readings = {}
        noise = (
            self._rng.normal(0.0, self.noise.lidar_sigma, size=len(self.symbols))
            if self.noise.lidar_sigma > 0.0
            else np.zeros(len(self.symbols))
        )
        for k, sym in enumerate(self.symbols):
            origin, direction = mounts[sym]
            d = raycast(origin, direction, self.profile, self.geom.max_lidar_range)
            if math.isfinite(d):
                d = max(0.0, d + noise[k])
            readings[sym] = d
        return SensorFrame(
            t=self.state.t,
            lidar=readings,
            odom=self._last_odom,
            pitch_meas=self.state.pitch,
        )

    _last_odom: tuple[float, float] = (0.0, 0.0)

    # -- stepping --------------------------------------------------------------

    def _disturbance(self, kind: str) -> float:
        return sum(
            d.magnitude for d in self.disturbances if d.kind == kind and d.active(self.state.t)
        )

    def step(self, cmd: Commands) -> RobotState:
        g, s = self.geom, self.state
        v_l = float(np.clip(cmd.v_l, -g.max_wheel_speed, g.max_wheel_speed))
        v_r = float(np.clip(cmd.v_r, -g.max_wheel_speed, g.max_wheel_speed))
        rates = np.clip(np.asarray(cmd.act_rates, dtype=float),
                        -g.max_actuator_rate, g.max_actuator_rate)

        slip = self._disturbance("wheel_slip")
        v_l_eff, v_r_eff = v_l * (1.0 - slip), v_r * (1.0 - slip)
        v = 0.5 * (v_l_eff + v_r_eff)
        omega = (v_r_eff - v_l_eff) / g.track_width

        # Exact arc integration preserves the commanded arc length.
        dt = self.dt
        if abs(omega) < 1e-12:
            s.x += v * dt * math.cos(s.yaw)
            s.y += v * dt * math.sin(s.yaw)
        else:
            R = v / omega
            s.x += R * (math.sin(s.yaw + omega * dt) - math.sin(s.yaw))
            s.y += -R * (math.cos(s.yaw + omega * dt) - math.cos(s.yaw))
        lat = self._disturbance("lateral_slip")
        if lat != 0.0:
            s.x += -math.sin(s.yaw) * lat * dt
            s.y += math.cos(s.yaw) * lat * dt
        s.yaw = _wrap(s.yaw + omega * dt)
        s.v, s.omega = v, omega

        s.scissor_ext = np.clip(s.scissor_ext + rates * dt, self.ext_min, self.ext_max)
        self._last_odom = (v_l * dt, v_r * dt)  # encoders do not see slip
        s.t += dt
        self._resolve_support()
        return s

    def elevation(self) -> float:
        """Chassis-bottom height above its at-rest posture on the base."""
        return self.state.chassis_z - self.geom.d_hb


def _wrap(angle: float) -> float:
    return math.atan2(math.sin(angle), math.cos(angle))


# ---------------------------------------------------------------------------
# Linear pitch plant for the lift controllers


@dataclass
class PitchPlant:
    """Second-order chassis pitch driven by differential stack extension.

    theta_ddot = (k_a * (ext_f - ext_b) - tau_dist - c * theta_dot) / I
    with the two extensions integrating commanded rates (saturated to the
    stroke).  Constants are documented defaults, not measured values.
    """

    k_a: float = 2000.0  # N*m per metre of extension difference
    c: float = 30.0  # N*m*s
    inertia: float = 4.0  # kg*m^2
    stroke: float = scissor.PROTOTYPE_STROKE_BUDGET
    rate_limit: float = 0.05
    theta: float = 0.0
    theta_dot: float = 0.0
    ext_f: float = 0.0
    ext_b: float = 0.0

    def step(self, a_f: float, a_b: float, dt: float, tau_dist: float = 0.0) -> float:
        a_f = min(max(a_f, -self.rate_limit), self.rate_limit)
        a_b = min(max(a_b, -self.rate_limit), self.rate_limit)
        self.ext_f = min(max(self.ext_f + a_f * dt, 0.0), self.stroke)
        self.ext_b = min(max(self.ext_b + a_b * dt, 0.0), self.stroke)
        acc = (self.k_a * (self.ext_f - self.ext_b) - tau_dist - self.c * self.theta_dot) / self.inertia
        self.theta_dot += acc * dt
        self.theta += self.theta_dot * dt
        return self.theta

    @property
    def ascent(self) -> float:
        return 0.5 * (self.ext_f + self.ext_b)
