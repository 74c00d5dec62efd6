"""Angle arithmetic and 2D frame transforms.

Angles are stored in degrees. The canonical range of an absolute angle is
[0, 360) and the canonical range of an angle difference is [-180, 180).
Trigonometry converts to radians at the call site.
"""

import math
from typing import NamedTuple, Sequence

import numpy as np

from src.exceptions import DomainError

AngleDeg = float
"""Angle in degrees, canonical range [0, 360) once wrapped."""

Point2D = tuple[float, float]


def _require_finite(*values: float) -> None:
    for value in values:
        if not math.isfinite(value):
            raise DomainError(f"Angle must be finite, got {value!r}")


def wrap_deg(a: float) -> AngleDeg:
    """
    Reduce an angle modulo 360.

    Args:
        a: Angle in degrees

    Returns:
        Equivalent angle in [0, 360)

    Raises:
        DomainError: If the angle is not finite
    """
    _require_finite(a)
    wrapped = a % 360.0
    # a tiny negative input rounds up to exactly 360.0
    if wrapped >= 360.0:
        wrapped = 0.0
    return wrapped


def angle_diff_deg(a: float, b: float) -> float:
    """
    Signed minimal difference from b to a.

    Returns d in [-180, 180) such that wrap_deg(b + d) == wrap_deg(a).

    Args:
        a: Target angle in degrees
        b: Reference angle in degrees

    Raises:
        DomainError: If either angle is not finite
    """
    _require_finite(a, b)
    d = (a - b + 180.0) % 360.0
    if d >= 360.0:
        d = 0.0
    return d - 180.0


def circular_mean_deg(
    angles: Sequence[float], weights: Sequence[float] | None = None
) -> AngleDeg:
    """
    Weighted circular mean of angles via the mean of unit vectors.

    Args:
        angles: Angles in degrees
        weights: Optional non-negative weights, same length as angles

    Returns:
        Mean direction in [0, 360)

    Raises:
        DomainError: If no angle is given or the resultant vector vanishes
    """
    if len(angles) == 0:
        raise DomainError("Circular mean of an empty sequence")
    radians = np.deg2rad(np.asarray(angles, dtype=float))
    w = np.ones_like(radians) if weights is None else np.asarray(weights, float)
    s = float(np.sum(w * np.sin(radians)))
    c = float(np.sum(w * np.cos(radians)))
    if math.hypot(s, c) < 1e-12:
        raise DomainError("Circular mean undefined for opposing angles")
    return wrap_deg(math.degrees(math.atan2(s, c)))


class Transform2D(NamedTuple):
    """Rigid 2D transform p -> R(rotation) p + translation.

    Built from a robot pose it maps body-frame coordinates into the world frame;
    its inverse maps world coordinates into the body frame.
    """

    rotation: float  # radians
    translation: Point2D

    @classmethod
    def identity(cls) -> "Transform2D":
        return cls(0.0, (0.0, 0.0))

    @classmethod
    def from_pose(cls, x: float, y: float, phi_deg: float) -> "Transform2D":
        """Transform of a frame located at (x, y) with heading phi_deg."""
        return cls(math.radians(phi_deg), (x, y))

    def apply(self, p: Point2D) -> Point2D:
        c, s = math.cos(self.rotation), math.sin(self.rotation)
        tx, ty = self.translation
        return (c * p[0] - s * p[1] + tx, s * p[0] + c * p[1] + ty)

    def inverse(self) -> "Transform2D":
        c, s = math.cos(self.rotation), math.sin(self.rotation)
        tx, ty = self.translation
        return Transform2D(-self.rotation, (-(c * tx + s * ty), s * tx - c * ty))

    def compose(self, other: "Transform2D") -> "Transform2D":
        """Transform equivalent to applying other first, then self."""
        return Transform2D(self.rotation + other.rotation, self.apply(other.translation))

    def matrix(self) -> np.ndarray:
        """Homogeneous 3x3 matrix of the transform."""
        c, s = math.cos(self.rotation), math.sin(self.rotation)
        tx, ty = self.translation
        return np.array([[c, -s, tx], [s, c, ty], [0.0, 0.0, 1.0]])


def world_to_frame(frame: Transform2D, p: Point2D) -> Point2D:
    """
    Express a world point in the frame described by a transform.

    Args:
        frame: Pose of the frame in the world (see Transform2D.from_pose)
        p: Point in world coordinates

    Returns:
        Point in frame coordinates
    """
    c, s = math.cos(frame.rotation), math.sin(frame.rotation)
    dx = p[0] - frame.translation[0]
    dy = p[1] - frame.translation[1]
    return (c * dx + s * dy, -s * dx + c * dy)


def frame_to_world(frame: Transform2D, p: Point2D) -> Point2D:
    """Inverse of world_to_frame."""
    return frame.apply(p)
