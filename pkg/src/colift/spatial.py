"""Rigid-body spatial algebra: rotations, frames, twists, wrenches.

Conventions used throughout the package:

* quaternions are stored ``(x, y, z, w)`` and follow the Hamilton product;
* 6-vectors stack the linear part first: twist ``(v; w)``, wrench ``(f; tau)``,
  spatial acceleration ``(a; dw)``;
* all quantities are expressed in the frame named by their ``frame`` tag,
  and helpers raise :class:`~colift.errors.FrameError` on a mismatch rather
  than silently mixing frames.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from .errors import FrameError, NumericalError

_QUAT_NORM_TOL = 1e-8
_SMALL_ANGLE = 1e-9


class FrameId(enum.Enum):
    """Coordinate frames that appear in the shared-carrying task."""

    WORLD = "world"
    BASE = "base"
    ROBOT_EE = "robot_ee"
    OBJECT = "object"
    HUMAN = "human"


def require_frame(quantity, frame: FrameId) -> None:
    """Raise ``FrameError`` unless ``quantity.frame`` is ``frame``."""
    if quantity.frame is not frame:
        raise FrameError(
            f"expected a quantity in {frame.value!r}, got {quantity.frame.value!r}"
        )


def check_finite(arr: np.ndarray, what: str = "array") -> np.ndarray:
    """Return ``arr`` unchanged, raising ``NumericalError`` if any entry is non-finite."""
    arr = np.asarray(arr, dtype=float)
    if not np.all(np.isfinite(arr)):
        raise NumericalError(f"{what} contains non-finite values")
    return arr


def skew(v: np.ndarray) -> np.ndarray:
    """Skew-symmetric matrix S(v) with S(v) @ u == cross(v, u)."""
    x, y, z = v
    return np.array([
        [0.0, -z, y],
        [z, 0.0, -x],
        [-y, x, 0.0],
    ])


# ---------------------------------------------------------------------------
# quaternions (x, y, z, w)
# ---------------------------------------------------------------------------

def quat_identity() -> np.ndarray:
    return np.array([0.0, 0.0, 0.0, 1.0])


def quat_normalize(q: np.ndarray) -> np.ndarray:
    q = np.asarray(q, dtype=float)
    n = np.linalg.norm(q)
    if n < _QUAT_NORM_TOL:
        raise NumericalError("cannot normalize a near-zero quaternion")
    return q / n


def quat_mul(q1: np.ndarray, q2: np.ndarray) -> np.ndarray:
    """Hamilton product; rotation composition R(q1 * q2) == R(q1) @ R(q2)."""
    x1, y1, z1, w1 = q1
    x2, y2, z2, w2 = q2
    return np.array([
        w1 * x2 + x1 * w2 + y1 * z2 - z1 * y2,
        w1 * y2 - x1 * z2 + y1 * w2 + z1 * x2,
        w1 * z2 + x1 * y2 - y1 * x2 + z1 * w2,
        w1 * w2 - x1 * x2 - y1 * y2 - z1 * z2,
    ])


def quat_conj(q: np.ndarray) -> np.ndarray:
    x, y, z, w = q
    return np.array([-x, -y, -z, w])


def quat_to_rot(q: np.ndarray) -> np.ndarray:
    """Rotation matrix of a unit quaternion."""
    x, y, z, w = quat_normalize(q)
    xx, yy, zz = x * x, y * y, z * z
    xy, xz, yz = x * y, x * z, y * z
    wx, wy, wz = w * x, w * y, w * z
    return np.array([
        [1.0 - 2.0 * (yy + zz), 2.0 * (xy - wz), 2.0 * (xz + wy)],
        [2.0 * (xy + wz), 1.0 - 2.0 * (xx + zz), 2.0 * (yz - wx)],
        [2.0 * (xz - wy), 2.0 * (yz + wx), 1.0 - 2.0 * (xx + yy)],
    ])


def rot_to_quat(R: np.ndarray) -> np.ndarray:
    """Unit quaternion of a rotation matrix (Shepperd's method, w >= 0)."""
    R = np.asarray(R, dtype=float)
    tr = np.trace(R)
    if tr > 0.0:
        s = np.sqrt(tr + 1.0) * 2.0
        q = np.array([
            (R[2, 1] - R[1, 2]) / s,
            (R[0, 2] - R[2, 0]) / s,
            (R[1, 0] - R[0, 1]) / s,
            0.25 * s,
        ])
    else:
        i = int(np.argmax(np.diag(R)))
        j, k = (i + 1) % 3, (i + 2) % 3
        s = np.sqrt(max(R[i, i] - R[j, j] - R[k, k] + 1.0, 0.0)) * 2.0
        q = np.empty(4)
        q[i] = 0.25 * s
        q[j] = (R[j, i] + R[i, j]) / s
        q[k] = (R[k, i] + R[i, k]) / s
        q[3] = (R[k, j] - R[j, k]) / s
    if q[3] < 0.0:
        q = -q
    return quat_normalize(q)


def quat_from_rotvec(phi: np.ndarray) -> np.ndarray:
    """Quaternion for a rotation of |phi| radians about phi / |phi|."""
    phi = np.asarray(phi, dtype=float)
    angle = np.linalg.norm(phi)
    if angle < _SMALL_ANGLE:
        # first-order expansion keeps the map smooth through zero
        return quat_normalize(np.array([*(0.5 * phi), 1.0]))
    axis = phi / angle
    half = 0.5 * angle
    return np.array([*(np.sin(half) * axis), np.cos(half)])


def quat_log(q: np.ndarray) -> np.ndarray:
    """Rotation vector of a unit quaternion (inverse of ``quat_from_rotvec``).

    Always returns the short-way representation, |result| <= pi.
    """
    x, y, z, w = quat_normalize(q)
    if w < 0.0:
        x, y, z, w = -x, -y, -z, -w
    sin_half = np.sqrt(x * x + y * y + z * z)
    if sin_half < _SMALL_ANGLE:
        return 2.0 * np.array([x, y, z])
    angle = 2.0 * np.arctan2(sin_half, w)
    return (angle / sin_half) * np.array([x, y, z])


def quat_integrate(q: np.ndarray, omega_world: np.ndarray, dt: float) -> np.ndarray:
    """Advance orientation by a world-frame angular velocity over ``dt``."""
    return quat_normalize(quat_mul(quat_from_rotvec(np.asarray(omega_world) * dt), q))


def orientation_error(q: np.ndarray, q_des: np.ndarray) -> np.ndarray:
    """World rotation vector taking ``q_des`` to ``q`` (zero when aligned)."""
    return quat_log(quat_mul(q, quat_conj(q_des)))


# ---------------------------------------------------------------------------
# tagged spatial quantities
# ---------------------------------------------------------------------------

@dataclass
class Pose:
    """Position and orientation of a frame relative to the world."""

    position: np.ndarray
    quaternion: np.ndarray

    def __post_init__(self):
        self.position = check_finite(self.position, "position").reshape(3)
        self.quaternion = quat_normalize(check_finite(self.quaternion, "quaternion").reshape(4))

    @property
    def rotation(self) -> np.ndarray:
        return quat_to_rot(self.quaternion)

    def transform_point(self, p_local: np.ndarray) -> np.ndarray:
        return self.position + self.rotation @ np.asarray(p_local, dtype=float)


@dataclass
class Twist:
    """Linear and angular velocity ``(v; w)`` of a frame."""

    linear: np.ndarray
    angular: np.ndarray
    frame: FrameId = FrameId.WORLD

    def __post_init__(self):
        self.linear = check_finite(self.linear, "twist linear part").reshape(3)
        self.angular = check_finite(self.angular, "twist angular part").reshape(3)

    def as_vector(self) -> np.ndarray:
        return np.concatenate([self.linear, self.angular])

    @classmethod
    def from_vector(cls, vec: np.ndarray, frame: FrameId = FrameId.WORLD) -> "Twist":
        vec = check_finite(vec, "twist").reshape(6)
        return cls(vec[:3], vec[3:], frame)


@dataclass
class Wrench:
    """Force and torque ``(f; tau)`` acting at a frame's origin."""

    force: np.ndarray
    torque: np.ndarray
    frame: FrameId = FrameId.ROBOT_EE

    def __post_init__(self):
        self.force = check_finite(self.force, "wrench force").reshape(3)
        self.torque = check_finite(self.torque, "wrench torque").reshape(3)

    def as_vector(self) -> np.ndarray:
        return np.concatenate([self.force, self.torque])

    @classmethod
    def from_vector(cls, vec: np.ndarray, frame: FrameId = FrameId.ROBOT_EE) -> "Wrench":
        vec = check_finite(vec, "wrench").reshape(6)
        return cls(vec[:3], vec[3:], frame)


@dataclass
class SpatialAccel:
    """Linear and angular acceleration ``(a; dw)`` of a frame."""

    linear: np.ndarray
    angular: np.ndarray
    frame: FrameId = FrameId.WORLD

    def __post_init__(self):
        self.linear = check_finite(self.linear, "accel linear part").reshape(3)
        self.angular = check_finite(self.angular, "accel angular part").reshape(3)

    def as_vector(self) -> np.ndarray:
        return np.concatenate([self.linear, self.angular])


# ---------------------------------------------------------------------------
# transport maps and the partial grasp matrix
# ---------------------------------------------------------------------------

def transport_twist(offset: np.ndarray) -> np.ndarray:
    """6x6 map of a rigid-body twist to a point displaced by ``offset``.

    With ``r`` pointing from the old reference point to the new one (both
    in the same frame), ``v_new = v_old + w x r`` and the angular part is
    unchanged.
    """
    return np.block([
        [np.eye(3), -skew(offset)],
        [np.zeros((3, 3)), np.eye(3)],
    ])


def transport_accel(accel: np.ndarray, omega: np.ndarray, offset: np.ndarray) -> np.ndarray:
    """Spatial acceleration at a point displaced by ``offset`` on the same body.

    Unlike the twist map this is not linear in the acceleration alone: the
    centripetal term ``w x (w x r)`` enters through the current angular
    velocity.
    """
    accel = np.asarray(accel, dtype=float).reshape(6)
    omega = np.asarray(omega, dtype=float).reshape(3)
    offset = np.asarray(offset, dtype=float).reshape(3)
    out = transport_twist(offset) @ accel
    out[:3] += np.cross(omega, np.cross(omega, offset))
    return out


def transport_wrench(offset: np.ndarray) -> np.ndarray:
    """6x6 map of a wrench to a reference point displaced by ``offset``.

    Dual of :func:`transport_twist`: ``transport_wrench(r)`` equals
    ``inv(transport_twist(r)).T`` so the power ``twist . wrench`` is
    invariant under a change of reference point.
    """
    return np.block([
        [np.eye(3), np.zeros((3, 3))],
        [-skew(offset), np.eye(3)],
    ])


def rot6(R: np.ndarray) -> np.ndarray:
    """Block-diagonal rotation of a 6-vector's linear and angular parts."""
    out = np.zeros((6, 6))
    out[:3, :3] = R
    out[3:, 3:] = R
    return out


@dataclass
class PartialGraspMatrix:
    """Wrench map for a second grasp point rigidly attached to the end effector.

    ``matrix`` maps a wrench applied at the partner's grasp point to the
    equivalent wrench at the end-effector origin; ``offset`` points from the
    end effector to the partner's grasp, expressed in the end-effector frame.
    """

    offset: np.ndarray
    matrix: np.ndarray = field(init=False)

    def __post_init__(self):
        self.offset = check_finite(self.offset, "grasp offset").reshape(3)
        self.matrix = np.block([
            [np.eye(3), np.zeros((3, 3))],
            [skew(self.offset), np.eye(3)],
        ])

    def inverse(self) -> np.ndarray:
        """Closed-form inverse: the same structure with a negated offset."""
        return np.block([
            [np.eye(3), np.zeros((3, 3))],
            [-skew(self.offset), np.eye(3)],
        ])

    def map_wrench(self, wrench_at_partner: np.ndarray) -> np.ndarray:
        return self.matrix @ np.asarray(wrench_at_partner, dtype=float).reshape(6)


def partial_grasp(offset: np.ndarray) -> PartialGraspMatrix:
    """Grasp map for a partner holding the object at ``offset`` from the EE."""
    return PartialGraspMatrix(np.asarray(offset, dtype=float))
