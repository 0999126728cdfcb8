"""
Kinematics of one inverted five-bar (M-shape) unit.

Frame: the left servo axis sits at the origin, the right servo axis at
(base_separation, 0). Servo angles are measured from the base line, and y is
positive toward the palm. Lengths are millimeters, angles radians.
"""

import logging
import math
from dataclasses import dataclass
from functools import lru_cache
from typing import List, Tuple

import numpy as np

from .exceptions import NoIntersection, Unreachable

logger = logging.getLogger(__name__)

SERVO_SECONDS_PER_60_DEG = 0.07

# Angle slack when checking servo limits.
LIMIT_EPS = 1e-9
# A candidate joint solution must reproduce its target this closely (mm).
CLOSURE_TOL = 1e-6

_WORKSPACE_SAMPLES = 25
_Y_SCAN_STEP_MM = 0.25
_Y_BISECT_TOL_MM = 1e-9


@dataclass(frozen=True)
class LinkageGeometry:
    """Link lengths (mm) and the shared servo limits (rad) of one unit."""

    base_separation: float
    proximal_length: float
    distal_length: float
    servo_min: float
    servo_max: float

    def __post_init__(self) -> None:
        for name in ("base_separation", "proximal_length", "distal_length"):
            value = getattr(self, name)
            if not (math.isfinite(value) and value > 0):
                raise ValueError(f"{name} must be a positive length, got {value}")
        if not (math.isfinite(self.servo_min) and math.isfinite(self.servo_max)):
            raise ValueError("servo limits must be finite")
        if not self.servo_min < self.servo_max:
            raise ValueError("servo_min must be smaller than servo_max")
        if not self._has_workspace():
            raise ValueError("geometry has an empty workspace: no in-limit angle pair closes")

    @property
    def midline_x(self) -> float:
        return self.base_separation / 2.0

    def within_limits(self, angles: "JointAngles") -> bool:
        lo = self.servo_min - LIMIT_EPS
        hi = self.servo_max + LIMIT_EPS
        return lo <= angles.left <= hi and lo <= angles.right <= hi

    def _has_workspace(self) -> bool:
        grid = np.linspace(self.servo_min, self.servo_max, _WORKSPACE_SAMPLES)
        for left in grid:
            for right in grid:
                if _distal_gap(self, float(left), float(right)) <= 2.0 * self.distal_length:
                    return True
        return False


@dataclass(frozen=True)
class JointAngles:
    """Left and right servo angles in radians."""

    left: float
    right: float

    def __post_init__(self) -> None:
        if not (math.isfinite(self.left) and math.isfinite(self.right)):
            raise ValueError("joint angles must be finite")

    @classmethod
    def from_degrees(cls, left: float, right: float) -> "JointAngles":
        return cls(math.radians(left), math.radians(right))

    def as_degrees(self) -> Tuple[float, float]:
        return math.degrees(self.left), math.degrees(self.right)


@dataclass(frozen=True)
class ContactPoint:
    """End-effector position of one unit in millimeters."""

    x: float
    y: float

    def __post_init__(self) -> None:
        if not (math.isfinite(self.x) and math.isfinite(self.y)):
            raise ValueError(f"contact point must be finite, got ({self.x}, {self.y})")

    def distance_to(self, other: "ContactPoint") -> float:
        return math.hypot(self.x - other.x, self.y - other.y)


def _proximal_tips(geom: LinkageGeometry, left: float, right: float) -> Tuple[np.ndarray, np.ndarray]:
    l1 = geom.proximal_length
    p_left = np.array([l1 * math.cos(left), l1 * math.sin(left)])
    p_right = np.array([geom.base_separation + l1 * math.cos(right), l1 * math.sin(right)])
    return p_left, p_right


def _distal_gap(geom: LinkageGeometry, left: float, right: float) -> float:
    p_left, p_right = _proximal_tips(geom, left, right)
    return float(np.hypot(*(p_right - p_left)))


def forward_kinematics(geom: LinkageGeometry, angles: JointAngles) -> ContactPoint:
    """
    End-effector position for a servo angle pair.

    The end-effector is where the two distal-link circles, centered at the
    proximal-link tips, intersect. Of the two intersections the one with the
    larger y (elbow-up, toward the palm) is returned.

    Args:
        geom: Unit geometry
        angles: Servo angles

    Returns:
        ContactPoint of the end-effector

    Raises:
        NoIntersection: when the distal links cannot meet
    """
    p_left, p_right = _proximal_tips(geom, angles.left, angles.right)
    chord = p_right - p_left
    d = float(np.hypot(*chord))
    l2 = geom.distal_length

    if d < 1e-12 or d > 2.0 * l2:
        raise NoIntersection(
            f"distal links cannot close for angles {angles.as_degrees()} deg (tip gap {d:.6g} mm)"
        )

    half_height = math.sqrt(max(l2 * l2 - (d / 2.0) ** 2, 0.0))
    mid = (p_left + p_right) / 2.0
    normal = np.array([-chord[1], chord[0]]) / d
    first = mid + half_height * normal
    second = mid - half_height * normal
    point = first if first[1] >= second[1] else second
    return ContactPoint(float(point[0]), float(point[1]))


def _servo_candidates(geom: LinkageGeometry, base_x: float, target: ContactPoint) -> Tuple[float, float]:
    """Base angle and half-spread for a servo at (base_x, 0) reaching target."""
    dx = target.x - base_x
    dy = target.y
    r = math.hypot(dx, dy)
    if r < 1e-12:
        raise Unreachable(f"target ({target.x}, {target.y}) coincides with a servo axis")

    l1, l2 = geom.proximal_length, geom.distal_length
    cos_alpha = (l1 * l1 + r * r - l2 * l2) / (2.0 * l1 * r)
    if abs(cos_alpha) > 1.0 + 1e-12:
        raise Unreachable(f"target ({target.x}, {target.y}) is out of reach")
    cos_alpha = min(1.0, max(-1.0, cos_alpha))
    alpha = math.atan2(math.sqrt(1.0 - cos_alpha * cos_alpha), cos_alpha)
    return math.atan2(dy, dx), alpha


def _branch_rank(left_sign: int, right_sign: int) -> int:
    if left_sign > 0 and right_sign < 0:
        return 0  # both elbows out
    if left_sign < 0 and right_sign > 0:
        return 1  # both elbows in
    return 2


def inverse_kinematics(geom: LinkageGeometry, target: ContactPoint) -> JointAngles:
    """
    Servo angles that place the end-effector on target.

    Each servo has two elbow candidates. Candidates outside the servo limits,
    or whose forward kinematics lands elsewhere (the other circle
    intersection), are discarded. The remaining ones are ranked elbows-out
    first, then elbows-in, then mixed; ties go to the most symmetric pair.

    Raises:
        Unreachable: when no in-limit solution exists
    """
    phi_left, alpha_left = _servo_candidates(geom, 0.0, target)
    phi_right, alpha_right = _servo_candidates(geom, geom.base_separation, target)

    candidates: List[Tuple[int, float, JointAngles]] = []
    for left_sign in (1, -1):
        for right_sign in (1, -1):
            angles = JointAngles(
                _wrap(phi_left + left_sign * alpha_left),
                _wrap(phi_right + right_sign * alpha_right),
            )
            if not geom.within_limits(angles):
                continue
            try:
                reached = forward_kinematics(geom, angles)
            except NoIntersection:
                continue
            if reached.distance_to(target) > CLOSURE_TOL:
                continue
            asymmetry = abs(angles.left + angles.right - math.pi)
            candidates.append((_branch_rank(left_sign, right_sign), asymmetry, angles))

    if not candidates:
        raise Unreachable(f"no in-limit joint solution for ({target.x}, {target.y})")

    candidates.sort(key=lambda c: (c[0], c[1]))
    return candidates[0][2]


def _wrap(angle: float) -> float:
    """Map an angle into (-pi, pi]."""
    wrapped = math.atan2(math.sin(angle), math.cos(angle))
    return math.pi if wrapped == -math.pi else wrapped


def workspace_contains(geom: LinkageGeometry, target: ContactPoint) -> bool:
    """True when inverse_kinematics finds an in-limit solution for target."""
    try:
        inverse_kinematics(geom, target)
    except Unreachable:
        return False
    return True


def travel_time(
    start: JointAngles,
    end: JointAngles,
    seconds_per_60deg: float = SERVO_SECONDS_PER_60_DEG,
) -> float:
    """Seconds for both servos, moving together at rated speed, to go from start to end."""
    delta = max(abs(end.left - start.left), abs(end.right - start.right))
    return math.degrees(delta) * seconds_per_60deg / 60.0


@lru_cache(maxsize=64)
def reachable_y_range(geom: LinkageGeometry, x: float) -> Tuple[float, float]:
    """
    Reachable height band of the end-effector on the vertical line at x.

    The band is located by scanning y and then bisecting both edges.

    Raises:
        Unreachable: when no height is reachable at x
    """
    reach = geom.proximal_length + geom.distal_length
    ys = np.arange(0.0, reach + _Y_SCAN_STEP_MM, _Y_SCAN_STEP_MM)
    inside = [bool(y > 0 and workspace_contains(geom, ContactPoint(x, float(y)))) for y in ys]
    if not any(inside):
        raise Unreachable(f"no reachable height at x={x}")

    first = inside.index(True)
    last = len(inside) - 1 - inside[::-1].index(True)

    def edge(outside_y: float, inside_y: float) -> float:
        while abs(inside_y - outside_y) > _Y_BISECT_TOL_MM:
            probe = (outside_y + inside_y) / 2.0
            if workspace_contains(geom, ContactPoint(x, probe)):
                inside_y = probe
            else:
                outside_y = probe
        return inside_y

    y_min = float(ys[first]) if first == 0 else edge(float(ys[first - 1]), float(ys[first]))
    y_max = float(ys[last]) if last == len(ys) - 1 else edge(float(ys[last + 1]), float(ys[last]))
    logger.debug("Reachable band at x=%s: [%.4f, %.4f] mm", x, y_min, y_max)
    return y_min, y_max


def reflect_point(geom: LinkageGeometry, point: ContactPoint) -> ContactPoint:
    """Mirror a point about the unit midline."""
    return ContactPoint(geom.base_separation - point.x, point.y)


def reflect_angles(angles: JointAngles) -> JointAngles:
    """Joint angles of the mirrored pose: left <- pi - right, right <- pi - left."""
    return JointAngles(math.pi - angles.right, math.pi - angles.left)
