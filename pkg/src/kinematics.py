"""Ground-truth kinematics of two unicycle robots and of their relative state.

Robots follow the unicycle model integrated with explicit Euler at the physics
step. The relative state is the bearing theta_a of robot B seen from robot A
(body frame, degrees) and the range r_rel between them (meters).
"""

import math
from typing import NamedTuple

from src.config.constants import R_MIN
from src.exceptions import DegenerateGeometryError, SingularityError
from src.geometry import AngleDeg, Transform2D, world_to_frame, wrap_deg


class Pose2D(NamedTuple):
    """Absolute pose of a robot in the world frame."""

    x: float
    y: float
    phi: AngleDeg

    @classmethod
    def create(cls, x: float, y: float, phi: float) -> "Pose2D":
        """Build a pose with the heading wrapped to [0, 360)."""
        return cls(x, y, wrap_deg(phi))

    def transform(self) -> Transform2D:
        return Transform2D.from_pose(self.x, self.y, self.phi)


class ControlInput(NamedTuple):
    """Linear velocity v (m/s) and angular velocity phi_dot (deg/s)."""

    v: float
    phi_dot: float


class RelativeState(NamedTuple):
    """Bearing of B seen from A (degrees) and range between the robots (meters)."""

    theta_a: AngleDeg
    r_rel: float

    def theta_b(self, phi_a: AngleDeg, phi_b: AngleDeg) -> AngleDeg:
        """Bearing of A seen from B."""
        return theta_b_from_theta_a(self.theta_a, phi_a, phi_b)


def step_pose(p: Pose2D, u: ControlInput, dt: float) -> Pose2D:
    """
    Advance a pose by one explicit-Euler step of the unicycle model.

    Position moves along the heading held at the start of the step, then the
    heading integrates the angular velocity.

    Args:
        p: Current pose
        u: Control held during the step
        dt: Step length in seconds (> 0)

    Returns:
        Pose at the end of the step, heading wrapped to [0, 360)
    """
    if dt <= 0:
        raise ValueError(f"dt must be positive, got {dt}")
    if u.v == 0.0:
        x, y = p.x, p.y
    else:
        phi = math.radians(p.phi)
        x = p.x + u.v * math.cos(phi) * dt
        y = p.y + u.v * math.sin(phi) * dt
    phi_next = p.phi if u.phi_dot == 0.0 else wrap_deg(p.phi + u.phi_dot * dt)
    return Pose2D(x, y, phi_next)


def true_relative_state(pa: Pose2D, pb: Pose2D) -> RelativeState:
    """
    Relative state of B with respect to A from the two absolute poses.

    Raises:
        DegenerateGeometryError: If both robots are at the same position
    """
    r_rel = math.hypot(pb.x - pa.x, pb.y - pa.y)
    if r_rel == 0.0:
        raise DegenerateGeometryError(
            f"Robots A and B coincide at ({pa.x:.6f}, {pa.y:.6f})"
        )
    x_b, y_b = world_to_frame(pa.transform(), (pb.x, pb.y))
    theta_a = wrap_deg(math.degrees(math.atan2(y_b, x_b)))
    return RelativeState(theta_a, r_rel)


def theta_b_from_theta_a(theta_a: AngleDeg, phi_a: AngleDeg, phi_b: AngleDeg) -> AngleDeg:
    """Bearing of A seen from B: theta_a + phi_a - phi_b + 180, wrapped."""
    return wrap_deg(theta_a + phi_a - phi_b + 180.0)


def relative_state_derivative(
    x: RelativeState,
    va: float,
    vb: float,
    phi_dot_a: float,
    theta_b: AngleDeg,
    r_min: float = R_MIN,
) -> tuple[float, float]:
    """
    Time derivative of the relative state.

    theta_dot = -phi_dot_a + (vb sin theta_b + va sin theta_a) / r_rel
    r_dot = -(vb cos theta_b + va cos theta_a)

    Args:
        x: Current relative state
        va: Linear velocity of A (m/s)
        vb: Linear velocity of B (m/s)
        phi_dot_a: Angular velocity of A (deg/s)
        theta_b: Bearing of A seen from B (degrees)
        r_min: Range floor (meters)

    Returns:
        (theta_dot in deg/s, r_dot in m/s)

    Raises:
        SingularityError: If x.r_rel <= r_min
    """
    if x.r_rel <= r_min:
        raise SingularityError(
            f"Relative range {x.r_rel:.6g} m is at or below r_min={r_min} m",
            r_rel=x.r_rel,
        )
    ta = math.radians(x.theta_a)
    tb = math.radians(theta_b)
    lateral = vb * math.sin(tb) + va * math.sin(ta)
    theta_dot = -phi_dot_a + math.degrees(lateral / x.r_rel)
    r_dot = -(vb * math.cos(tb) + va * math.cos(ta))
    return theta_dot, r_dot


def step_relative_state(
    x: RelativeState,
    va: float,
    vb: float,
    phi_dot_a: float,
    theta_b: AngleDeg,
    dt: float,
    r_min: float = R_MIN,
) -> RelativeState:
    """One explicit-Euler step of the relative-state ODE."""
    theta_dot, r_dot = relative_state_derivative(x, va, vb, phi_dot_a, theta_b, r_min)
    return RelativeState(wrap_deg(x.theta_a + theta_dot * dt), x.r_rel + r_dot * dt)
