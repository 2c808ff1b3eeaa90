"""Quaternion and rigid-transform algebra on minimal error coordinates.

Quaternions are stored imaginary-first, ``[ax, ay, az, b]``, Hamilton
convention.  A rotation error ``e`` is the imaginary part of the left
perturbation ``dq = q_meas * q_est^-1`` (sign fixed so that ``b >= 0``), so
``e`` is on the half-angle scale: a rotation by ``t`` radians about ``u``
has ``e = sin(t/2) u``.

Rigid transforms use the error state ``(dr, e)``: the position is perturbed
additively and the orientation on the left, ``q' = retract(q, e)``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

IDENTITY_QUAT = np.array([0.0, 0.0, 0.0, 1.0])


class DomainError(ValueError):
    """Raised when an error vector lies outside the retraction domain."""


def normalize(q) -> np.ndarray:
    q = np.asarray(q, dtype=float)
    n = np.linalg.norm(q, axis=-1, keepdims=True)
    if np.any(n == 0.0):
        raise DomainError("cannot normalize a zero quaternion")
    return q / n


def canonical(q) -> np.ndarray:
    """Flip sign so that the real part is non-negative."""
    q = np.asarray(q, dtype=float)
    sign = np.where(q[..., 3:4] < 0.0, -1.0, 1.0)
    return q * sign


def quat_conj(q) -> np.ndarray:
    q = np.asarray(q, dtype=float)
    return np.concatenate([-q[..., :3], q[..., 3:]], axis=-1)


# the inverse of a unit quaternion is its conjugate
quat_inv = quat_conj


def quat_mul(p, q) -> np.ndarray:
    """Hamilton product ``p * q``; broadcasts over leading axes."""
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    pa, pb = p[..., :3], p[..., 3:]
    qa, qb = q[..., :3], q[..., 3:]
    a = pb * qa + qb * pa + np.cross(pa, qa)
    b = pb * qb - np.sum(pa * qa, axis=-1, keepdims=True)
    return np.concatenate([a, b], axis=-1)


def quat_to_matrix(q) -> np.ndarray:
    """Active rotation matrix of a unit quaternion (broadcasts)."""
    q = np.asarray(q, dtype=float)
    x, y, z, w = q[..., 0], q[..., 1], q[..., 2], q[..., 3]
    R = np.empty(q.shape[:-1] + (3, 3))
    R[..., 0, 0] = 1 - 2 * (y * y + z * z)
    R[..., 0, 1] = 2 * (x * y - z * w)
    R[..., 0, 2] = 2 * (x * z + y * w)
    R[..., 1, 0] = 2 * (x * y + z * w)
    R[..., 1, 1] = 1 - 2 * (x * x + z * z)
    R[..., 1, 2] = 2 * (y * z - x * w)
    R[..., 2, 0] = 2 * (x * z - y * w)
    R[..., 2, 1] = 2 * (y * z + x * w)
    R[..., 2, 2] = 1 - 2 * (x * x + y * y)
    return R


def matrix_to_quat(R) -> np.ndarray:
    """Quaternion of a rotation matrix, canonical sign (b >= 0)."""
    R = np.asarray(R, dtype=float)
    tr = np.trace(R)
    if tr > 0.0:
        s = 2.0 * np.sqrt(tr + 1.0)
        q = [(R[2, 1] - R[1, 2]) / s, (R[0, 2] - R[2, 0]) / s, (R[1, 0] - R[0, 1]) / s, 0.25 * s]
    elif R[0, 0] > R[1, 1] and R[0, 0] > R[2, 2]:
        s = 2.0 * np.sqrt(1.0 + R[0, 0] - R[1, 1] - R[2, 2])
        q = [0.25 * s, (R[0, 1] + R[1, 0]) / s, (R[0, 2] + R[2, 0]) / s, (R[2, 1] - R[1, 2]) / s]
    elif R[1, 1] > R[2, 2]:
        s = 2.0 * np.sqrt(1.0 + R[1, 1] - R[0, 0] - R[2, 2])
        q = [(R[0, 1] + R[1, 0]) / s, 0.25 * s, (R[1, 2] + R[2, 1]) / s, (R[0, 2] - R[2, 0]) / s]
    else:
        s = 2.0 * np.sqrt(1.0 + R[2, 2] - R[0, 0] - R[1, 1])
        q = [(R[0, 2] + R[2, 0]) / s, (R[1, 2] + R[2, 1]) / s, 0.25 * s, (R[1, 0] - R[0, 1]) / s]
    return canonical(normalize(q))


def axis_angle(axis, angle: float) -> np.ndarray:
    axis = np.asarray(axis, dtype=float)
    axis = axis / np.linalg.norm(axis)
    return np.concatenate([np.sin(angle / 2.0) * axis, [np.cos(angle / 2.0)]])


def quat_angle(q) -> float:
    """Rotation angle in radians, in [0, pi]."""
    q = canonical(q)
    return 2.0 * float(np.arctan2(np.linalg.norm(q[..., :3]), q[..., 3]))


def quat_power(q, t: float) -> np.ndarray:
    """Fractional rotation ``q**t`` along the shortest arc."""
    q = canonical(q)
    s = np.linalg.norm(q[:3])
    if s < 1e-15:
        return IDENTITY_QUAT.copy()
    angle = 2.0 * np.arctan2(s, q[3])
    return axis_angle(q[:3] / s, t * angle)


def slerp(q0, q1, t: float) -> np.ndarray:
    q0 = np.asarray(q0, dtype=float)
    q1 = np.asarray(q1, dtype=float)
    if np.dot(q0, q1) < 0.0:
        q1 = -q1
    delta = quat_mul(q1, quat_inv(q0))
    return normalize(quat_mul(quat_power(delta, t), q0))


def quat_error(q_est, q_meas) -> np.ndarray:
    """Rotation error taking ``q_est`` to ``q_meas`` (imaginary part of
    ``q_meas * q_est^-1``, canonical sign).  Broadcasts."""
    dq = canonical(quat_mul(q_meas, quat_inv(q_est)))
    return dq[..., :3]


def retract(q, e) -> np.ndarray:
    """Apply rotation error ``e`` to ``q`` on the left; inverse of
    :func:`quat_error`.  Requires ``|e| < 1``.  Broadcasts."""
    e = np.asarray(e, dtype=float)
    n2 = np.sum(e * e, axis=-1, keepdims=True)
    if np.any(n2 >= 1.0):
        raise DomainError(f"rotation error norm must be < 1, got {np.sqrt(n2.max()):.6g}")
    dq = np.concatenate([e, np.sqrt(1.0 - n2)], axis=-1)
    return quat_mul(dq, q)


def skew(v) -> np.ndarray:
    """Cross-product matrix, ``skew(a) @ b == cross(a, b)``.  Broadcasts."""
    v = np.asarray(v, dtype=float)
    S = np.zeros(v.shape[:-1] + (3, 3))
    S[..., 0, 1] = -v[..., 2]
    S[..., 0, 2] = v[..., 1]
    S[..., 1, 0] = v[..., 2]
    S[..., 1, 2] = -v[..., 0]
    S[..., 2, 0] = -v[..., 1]
    S[..., 2, 1] = v[..., 0]
    return S


@dataclass(frozen=True)
class RigidTransform:
    """Transform ``T_AB`` from frame B into frame A: ``p_A = R(q) p_B + r``."""

    r: np.ndarray
    q: np.ndarray

    def __post_init__(self):
        r = np.array(self.r, dtype=float).reshape(3)
        q = normalize(np.array(self.q, dtype=float).reshape(4))
        object.__setattr__(self, "r", r)
        object.__setattr__(self, "q", q)

    @classmethod
    def identity(cls) -> RigidTransform:
        return cls(np.zeros(3), IDENTITY_QUAT)

    @classmethod
    def from_matrix(cls, M) -> RigidTransform:
        M = np.asarray(M, dtype=float)
        return cls(M[:3, 3], matrix_to_quat(M[:3, :3]))

    @property
    def R(self) -> np.ndarray:
        return quat_to_matrix(self.q)

    def matrix(self) -> np.ndarray:
        M = np.eye(4)
        M[:3, :3] = self.R
        M[:3, 3] = self.r
        return M

    def __matmul__(self, other: RigidTransform) -> RigidTransform:
        return compose(self, other)

    def to_json(self) -> dict:
        return {"r": self.r.tolist(), "q": self.q.tolist()}

    @classmethod
    def from_json(cls, d: dict) -> RigidTransform:
        return cls(d["r"], d["q"])


def compose(T_AB: RigidTransform, T_BC: RigidTransform) -> RigidTransform:
    return RigidTransform(T_AB.r + T_AB.R @ T_BC.r, quat_mul(T_AB.q, T_BC.q))


def inverse(T: RigidTransform) -> RigidTransform:
    Rt = T.R.T
    return RigidTransform(-Rt @ T.r, quat_inv(T.q))


def apply(T: RigidTransform, p) -> np.ndarray:
    """Map points (..., 3) from frame B into frame A."""
    p = np.asarray(p, dtype=float)
    return p @ T.R.T + T.r


def perturb(T: RigidTransform, delta) -> RigidTransform:
    """Apply a 6-vector error ``(dr, e)`` to ``T``."""
    delta = np.asarray(delta, dtype=float)
    return RigidTransform(T.r + delta[:3], retract(T.q, delta[3:]))


def transform_error(T_est: RigidTransform, T_meas: RigidTransform) -> np.ndarray:
    """Error 6-vector ``(dr, e)`` with ``perturb(T_est, err) == T_meas``."""
    return np.concatenate([T_meas.r - T_est.r, quat_error(T_est.q, T_meas.q)])


def transform_jacobians(T_AB: RigidTransform, T_BC: RigidTransform) -> tuple[np.ndarray, np.ndarray]:
    """Jacobians of ``compose(T_AB, T_BC)`` w.r.t. the error states of each
    argument, as 6x6 blocks over ``(dr, e)``."""
    R_AB = T_AB.R
    J_left = np.eye(6)
    J_left[:3, 3:] = -2.0 * skew(R_AB @ T_BC.r)
    J_right = np.zeros((6, 6))
    J_right[:3, :3] = R_AB
    J_right[3:, 3:] = R_AB
    return J_left, J_right


def inverse_jacobian(T: RigidTransform) -> np.ndarray:
    """Jacobian of ``inverse(T)`` w.r.t. the error state of ``T``."""
    Rt = T.R.T
    J = np.zeros((6, 6))
    J[:3, :3] = -Rt
    J[:3, 3:] = -2.0 * Rt @ skew(T.r)
    J[3:, 3:] = -Rt
    return J
