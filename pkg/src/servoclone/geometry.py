"""Rigid-body poses, twists and first-order pose integration.

Conventions: meters, seconds, radians. Quaternions are (w, x, y, z) and kept
unit-norm after every operation. A pose orientation maps end-effector-frame
vectors into the world frame.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np


class Frame(enum.Enum):
    EE = "ee"
    WORLD = "world"


def vec3(x: float, y: float, z: float) -> np.ndarray:
    return np.array([x, y, z], dtype=np.float64)


def _check_finite(*arrays: np.ndarray) -> None:
    for a in arrays:
        if not np.all(np.isfinite(a)):
            raise ValueError("non-finite input")


# ---------------------------------------------------------------------------
# Quaternions (w, x, y, z)
# ---------------------------------------------------------------------------

def quat_identity() -> np.ndarray:
    return np.array([1.0, 0.0, 0.0, 0.0])


def quat_normalize(q: np.ndarray) -> np.ndarray:
    n = np.linalg.norm(q)
    if n < 1e-12:
        raise ValueError("cannot normalize near-zero quaternion")
    return q / n


def quat_multiply(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    aw, ax, ay, az = a
    bw, bx, by, bz = b
    return np.array([
        aw * bw - ax * bx - ay * by - az * bz,
        aw * bx + ax * bw + ay * bz - az * by,
        aw * by - ax * bz + ay * bw + az * bx,
        aw * bz + ax * by - ay * bx + az * bw,
    ])


def quat_conjugate(q: np.ndarray) -> np.ndarray:
    return np.array([q[0], -q[1], -q[2], -q[3]])


def quat_exp(rotvec: np.ndarray) -> np.ndarray:
    """Unit quaternion for a rotation vector (axis * angle)."""
    angle = float(np.linalg.norm(rotvec))
    if angle < 1e-12:
        # First-order expansion; renormalized below for safety.
        q = np.array([1.0, 0.5 * rotvec[0], 0.5 * rotvec[1], 0.5 * rotvec[2]])
        return quat_normalize(q)
    axis = rotvec / angle
    half = 0.5 * angle
    s = np.sin(half)
    return np.array([np.cos(half), s * axis[0], s * axis[1], s * axis[2]])


def quat_from_axis_angle(axis: np.ndarray, angle: float) -> np.ndarray:
    axis = np.asarray(axis, dtype=np.float64)
    n = np.linalg.norm(axis)
    if n < 1e-12:
        raise ValueError("zero rotation axis")
    return quat_exp(axis / n * angle)


def quat_rotate(q: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Rotate vector v by quaternion q."""
    qv = q[1:]
    t = 2.0 * np.cross(qv, v)
    return v + q[0] * t + np.cross(qv, t)


def quat_to_matrix(q: np.ndarray) -> np.ndarray:
    w, x, y, z = q
    return np.array([
        [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
        [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
        [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
    ])


# ---------------------------------------------------------------------------
# Pose and twist
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Pose:
    """World-frame position plus orientation of the end-effector frame."""

    position: np.ndarray = field(default_factory=lambda: np.zeros(3))
    quat: np.ndarray = field(default_factory=quat_identity)

    def __post_init__(self):
        object.__setattr__(self, "position", np.asarray(self.position, dtype=np.float64))
        object.__setattr__(self, "quat", np.asarray(self.quat, dtype=np.float64))
        _check_finite(self.position, self.quat)
        object.__setattr__(self, "quat", quat_normalize(self.quat))

    @staticmethod
    def identity() -> "Pose":
        return Pose()

    def rotation_matrix(self) -> np.ndarray:
        return quat_to_matrix(self.quat)


@dataclass(frozen=True)
class Twist:
    """Spatial velocity: linear (m/s) and angular (rad/s) with a frame tag."""

    linear: np.ndarray
    angular: np.ndarray
    frame: Frame = Frame.EE

    def __post_init__(self):
        object.__setattr__(self, "linear", np.asarray(self.linear, dtype=np.float64))
        object.__setattr__(self, "angular", np.asarray(self.angular, dtype=np.float64))
        _check_finite(self.linear, self.angular)

    @staticmethod
    def zero(frame: Frame = Frame.EE) -> "Twist":
        return Twist(np.zeros(3), np.zeros(3), frame)

    def as_array(self) -> np.ndarray:
        """(vx, vy, vz, wx, wy, wz) as a length-6 float array."""
        return np.concatenate([self.linear, self.angular])

    @staticmethod
    def from_array(v: np.ndarray, frame: Frame = Frame.EE) -> "Twist":
        v = np.asarray(v, dtype=np.float64)
        if v.shape != (6,):
            raise ValueError(f"twist array must have shape (6,), got {v.shape}")
        return Twist(v[:3].copy(), v[3:].copy(), frame)


def clamp_twist(twist: Twist, max_linear: float, max_angular: float) -> Twist:
    """Scale linear/angular parts down to the given magnitude limits."""
    lin, ang = twist.linear, twist.angular
    ln = np.linalg.norm(lin)
    if ln > max_linear:
        lin = lin * (max_linear / ln)
    an = np.linalg.norm(ang)
    if an > max_angular:
        ang = ang * (max_angular / an)
    return Twist(lin, ang, twist.frame)


def integrate_pose(pose: Pose, twist: Twist, dt: float) -> Pose:
    """Advance a pose by one first-order step of an end-effector-frame twist.

    Rotate-then-translate: the linear velocity is expressed in the EE frame at
    the start of the step, the orientation update is the exponential of the
    body angular velocity.
    """
    if not np.isfinite(dt) or dt <= 0.0:
        raise ValueError(f"dt must be positive and finite, got {dt}")
    if twist.frame is not Frame.EE:
        raise ValueError("integrate_pose expects an end-effector-frame twist")
    _check_finite(twist.linear, twist.angular)
    new_pos = pose.position + quat_rotate(pose.quat, twist.linear * dt)
    new_quat = quat_multiply(pose.quat, quat_exp(twist.angular * dt))
    return Pose(new_pos, quat_normalize(new_quat))


def twist_world_to_ee(twist: Twist, pose: Pose) -> Twist:
    """Re-express a world-frame twist in the pose's end-effector frame."""
    if twist.frame is not Frame.WORLD:
        raise ValueError("expected a world-frame twist")
    q_inv = quat_conjugate(pose.quat)
    return Twist(quat_rotate(q_inv, twist.linear), quat_rotate(q_inv, twist.angular), Frame.EE)


def twist_ee_to_world(twist: Twist, pose: Pose) -> Twist:
    """Re-express an end-effector-frame twist in the world frame."""
    if twist.frame is not Frame.EE:
        raise ValueError("expected an end-effector-frame twist")
    return Twist(quat_rotate(pose.quat, twist.linear), quat_rotate(pose.quat, twist.angular), Frame.WORLD)
