"""Closed-form kinematics and actuator loads of an n-level scissor lift.

The stack is the classic crossed-link construction: ``theta`` is the angle a
positive-sloping link makes with the horizontal, ``D`` the link length, and the
linear actuator runs from a fixed pivot B on the base (OB = b*D) to a moving
point A on a link (PA = a*D), with ``i`` scissors below B.  Platform height,
actuator pin-to-pin length and the force the actuator must deliver all have
closed forms in (a, b, theta, n, D, i), which both the design optimiser and the
climb simulator evaluate.

Units: metres, newtons, radians.  Degrees appear only at CLI boundaries.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

# Box constraints of the design problem (the theta_min bounds, in radians).
THETA_BOX_LO = math.radians(5.0)
THETA_BOX_HI = math.radians(10.0)


class ScissorError(ValueError):
    """Invalid geometry or operating point for the scissor closed forms."""


class ToggleSingularityError(ScissorError):
    """Force denominator vanished: the mechanism is at a toggle point."""


class InfeasibleClimbError(ScissorError):
    """Required climb height exceeds the reachable lift of the stack."""


@dataclass(frozen=True)
class ScissorConfig:
    """One scissor-lift design.

    a, b are dimensionless attachment fractions in (0, 0.5] (PA = a*D,
    OB = b*D).  ``i`` is the number of scissors below point B and is tied to
    the level count by i = n - 1.  ``load`` is the lifted weight in newtons
    (robot plus stack), ``climb_height`` the step height the stack must gain.
    """

    a: float
    b: float
    theta_min: float  # rad
    n: int
    D: float  # m
    load: float = 250.0  # N
    climb_height: float = 0.4  # m
    theta_max_rule: str = "reach"  # "reach": arcsin rule, "vertical": 90 deg

    def __post_init__(self) -> None:
        if not (0.0 < self.a <= 0.5):
            raise ScissorError(f"a={self.a} outside (0, 0.5]")
        if not (0.0 < self.b <= 0.5):
            raise ScissorError(f"b={self.b} outside (0, 0.5]")
        if not (0.0 < self.theta_min < math.pi / 2):
            raise ScissorError(f"theta_min={self.theta_min} rad outside (0, pi/2)")
        if self.n < 1:
            raise ScissorError(f"n={self.n} must be >= 1")
        if self.D <= 0.0:
            raise ScissorError(f"D={self.D} must be positive")
        if self.load < 0.0:
            raise ScissorError(f"load={self.load} must be >= 0")
        if self.climb_height < 0.0:
            raise ScissorError(f"climb_height={self.climb_height} must be >= 0")
        if self.theta_max_rule not in ("reach", "vertical"):
            raise ScissorError(f"unknown theta_max_rule {self.theta_max_rule!r}")

    @property
    def i(self) -> int:
        """Scissors below point B; the design problem fixes i = n - 1."""
        return self.n - 1

    @property
    def a_bar(self) -> float:
        return 1.0 - self.a

    @property
    def lam(self) -> float:
        """lambda = a_bar^2 - (i + a)^2, the cos^2 coefficient."""
        return self.a_bar**2 - (self.i + self.a) ** 2

    def box_violations(self) -> list[str]:
        """Design-box violations (not raised: the box belongs to the
        optimisation problem, while the closed forms stay evaluable)."""
        out = []
        if not (THETA_BOX_LO - 1e-12 <= self.theta_min <= THETA_BOX_HI + 1e-12):
            out.append(f"theta_min {math.degrees(self.theta_min):.3f} deg outside [5, 10] deg")
        if self.n < 2:
            out.append(f"n={self.n} < 2")
        dmin = d_min(self.climb_height, self.n)
        if self.D < dmin - 1e-12:
            out.append(f"D={self.D:.4f} below D_min={dmin:.4f}")
        if self.D > self.climb_height + 1e-12:
            out.append(f"D={self.D:.4f} above H={self.climb_height:.4f}")
        return out


@dataclass(frozen=True)
class ScissorEval:
    """Snapshot of the stack at one extension angle."""

    theta: float  # rad
    h: float  # platform height, m
    l: float  # actuator pin-to-pin length, m
    F: float  # actuator force, N


def _check_theta(theta: float) -> None:
    if not (0.0 < theta < math.pi / 2):
        raise ScissorError(f"theta={theta} rad outside (0, pi/2)")


def _radicand(cfg: ScissorConfig, theta: float) -> float:
    c = math.cos(theta)
    return cfg.lam * c * c - 2.0 * cfg.b * cfg.a_bar * c + cfg.b**2 + (cfg.i + cfg.a) ** 2


def height(cfg: ScissorConfig, theta: float) -> float:
    """Platform height h = n * D * sin(theta)."""
    _check_theta(theta)
    return cfg.n * cfg.D * math.sin(theta)


def actuator_length(cfg: ScissorConfig, theta: float) -> float:
    """Pin-to-pin actuator length at extension angle theta."""
    _check_theta(theta)
    rad = _radicand(cfg, theta)
    if rad < 0.0:
        raise ScissorError(f"degenerate geometry: negative radicand {rad} at theta={theta}")
    return cfg.D * math.sqrt(rad)


def actuator_force(cfg: ScissorConfig, theta: float) -> float:
    """Force the actuator must deliver to hold/move the load at theta."""
    _check_theta(theta)
    rad = _radicand(cfg, theta)
    if rad < 0.0:
        raise ScissorError(f"degenerate geometry: negative radicand {rad} at theta={theta}")
    den = cfg.b * cfg.a_bar * math.tan(theta) - cfg.lam * math.sin(theta)
    if den == 0.0:
        raise ToggleSingularityError(f"toggle point at theta={theta}: force denominator is zero")
    return cfg.n * cfg.load * math.sqrt(rad / (den * den))


def theta_max_for_climb(cfg: ScissorConfig) -> float:
    """Extension angle at which the stack has gained ``climb_height``.

    With h = n*D*sin(theta), gaining H above theta_min needs
    sin(theta_max) = sin(theta_min) + H/(n*D).  The alternative "vertical"
    rule returns 90 deg regardless (exposed for comparison runs).
    """
    if cfg.theta_max_rule == "vertical":
        return math.pi / 2
    arg = math.sin(cfg.theta_min) + cfg.climb_height / (cfg.n * cfg.D)
    if arg > 1.0 + 1e-12:
        raise InfeasibleClimbError(
            f"cannot gain {cfg.climb_height} m: sin(theta_max) would be {arg:.4f} > 1"
        )
    return math.asin(min(arg, 1.0))


def f_max(cfg: ScissorConfig) -> float:
    """Peak actuator force, attained in the most compressed state theta_min."""
    return actuator_force(cfg, cfg.theta_min)


def stroke(cfg: ScissorConfig) -> float:
    """Actuator travel between the most extended and most compressed states."""
    tmax = theta_max_for_climb(cfg)
    lmax = (
        cfg.D * math.sqrt(max(_radicand(cfg, tmax), 0.0))
        if tmax >= math.pi / 2
        else actuator_length(cfg, tmax)
    )
    return lmax - actuator_length(cfg, cfg.theta_min)


def d_min(H: float, n: int, theta_lb: float = THETA_BOX_LO) -> float:
    """Minimum link length able to climb H with n levels.

    Uses the lower bound of the theta_min box (5 deg by default): shorter
    links cannot gain H even when starting from the most compressed angle.
    """
    if H <= 0.0:
        raise ScissorError(f"H={H} must be positive")
    if n < 1:
        raise ScissorError(f"n={n} must be >= 1")
    return H / (n * (1.0 - math.sin(theta_lb)))


def theta_from_actuator_length(cfg: ScissorConfig, length: float) -> float:
    """Invert actuator_length: the extension angle for a pin-to-pin length.

    The radicand is a quadratic in cos(theta); the root in (0, 1) is the
    physical branch.  Raises if the length is outside the reachable range.
    """
    if length <= 0.0:
        raise ScissorError(f"length={length} must be positive")
    q = (length / cfg.D) ** 2
    A = cfg.lam
    B = -2.0 * cfg.b * cfg.a_bar
    C = cfg.b**2 + (cfg.i + cfg.a) ** 2 - q
    if A == 0.0:
        if B == 0.0:
            raise ScissorError("degenerate geometry: actuator length independent of theta")
        roots = [-C / B]
    else:
        disc = B * B - 4.0 * A * C
        if disc < 0.0:
            raise ScissorError(f"length={length} unreachable (negative discriminant)")
        s = math.sqrt(disc)
        roots = [(-B + s) / (2.0 * A), (-B - s) / (2.0 * A)]
    for c in roots:
        if -1e-12 < c < 1.0:
            return math.acos(min(max(c, 0.0), 1.0))
    raise ScissorError(f"length={length} maps to no extension angle in (0, 90 deg)")


def lift_from_extension(cfg: ScissorConfig, extension: float) -> float:
    """Height gained above the theta_min posture for a given actuator travel.

    ``extension`` is the stroke used so far (pin-to-pin length minus the
    length at theta_min).  Monotone in extension; 0 maps to 0.
    """
    if extension < 0.0:
        raise ScissorError(f"extension={extension} must be >= 0")
    if extension == 0.0:
        return 0.0
    l0 = actuator_length(cfg, cfg.theta_min)
    theta = theta_from_actuator_length(cfg, l0 + extension)
    return cfg.n * cfg.D * (math.sin(theta) - math.sin(cfg.theta_min))


def max_lift(cfg: ScissorConfig, stroke_budget: float) -> float:
    """Largest height gain reachable with a given actuator stroke budget."""
    return lift_from_extension(cfg, stroke_budget)


def evaluate_posture(cfg: ScissorConfig, theta: float) -> ScissorEval:
    """h, l and F at one extension angle, bundled for display."""
    return ScissorEval(
        theta=theta,
        h=height(cfg, theta),
        l=actuator_length(cfg, theta),
        F=actuator_force(cfg, theta),
    )


# The prototype design point (datasheet column) and the build configuration
# (round values actually used, with D capped at the climb height).
PROTOTYPE_DATASHEET = ScissorConfig(a=0.499, b=0.158, theta_min=math.radians(10.0), n=2, D=0.409)
PROTOTYPE_BUILD = ScissorConfig(a=0.5, b=0.16, theta_min=math.radians(10.0), n=2, D=0.4)

# Stroke of the commercial actuator fitted to the prototype build.
PROTOTYPE_STROKE_BUDGET = 0.25
