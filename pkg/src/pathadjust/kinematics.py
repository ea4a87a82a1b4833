"""Kinematics of the Franka Emika 7-DOF arm (modified DH convention).

Forward kinematics, geometric Jacobian, singularity test, and a closed-form
inverse kinematics that takes the seventh joint angle as a free parameter.
The closed form is derived geometrically: fixing q7 freezes the orientation
of frame 6, the elbow angle follows from the shoulder-wrist distance, and
the remaining joints are recovered frame by frame.  Branch multiplicity is
resolved by a fixed deterministic selection rule, so the mapping
(pose, q7) -> joints is single valued.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

# Link constants (meters), frames as in the modified-DH convention.
D1 = 0.333
D3 = 0.316
D5 = 0.384
DF = 0.107   # flange offset along z7
A4 = 0.0825
A5 = -0.0825
A7 = 0.088

# Derived shoulder/elbow/wrist triangle constants.
_LL24 = A4 * A4 + D3 * D3          # |o2 - o4|^2
_LL46 = A5 * A5 + D5 * D5          # |o4 - o6|^2
_L24 = math.sqrt(_LL24)
_L46 = math.sqrt(_LL46)
_ELBOW_OFFSET = math.atan2(D5, A4) + math.atan2(D3, A4)

DEFAULT_SINGULARITY_TOL = 1e-4


@dataclass(frozen=True)
class DHModel:
    """Per-joint modified-DH rows (a, d, alpha) plus a fixed flange offset."""

    a: np.ndarray
    d: np.ndarray
    alpha: np.ndarray
    flange_d: float = DF

    def __post_init__(self):
        if not (len(self.a) == len(self.d) == len(self.alpha) == 7):
            raise ValueError("DHModel needs exactly 7 joint rows")


def franka_model() -> DHModel:
    """The arm geometry of Fig.-2-style Franka data sheets."""
    a = np.array([0.0, 0.0, 0.0, A4, A5, 0.0, A7])
    d = np.array([D1, 0.0, D3, 0.0, D5, 0.0, 0.0])
    alpha = np.array([0.0, -np.pi / 2, np.pi / 2, np.pi / 2,
                      -np.pi / 2, np.pi / 2, np.pi / 2])
    return DHModel(a=a, d=d, alpha=alpha)


@dataclass(frozen=True)
class JointLimits:
    """Symmetric rate limits and asymmetric angle limits, per joint."""

    q_min: np.ndarray
    q_max: np.ndarray
    qd_max: np.ndarray
    qdd_max: np.ndarray
    qddd_max: np.ndarray

    def __post_init__(self):
        for name in ("q_min", "q_max", "qd_max", "qdd_max", "qddd_max"):
            v = np.asarray(getattr(self, name), dtype=float)
            object.__setattr__(self, name, v)
            if v.shape != (7,):
                raise ValueError(f"{name} must have 7 entries")
        if not np.all(self.q_min < self.q_max):
            raise ValueError("q_min must be < q_max componentwise")
        for name in ("qd_max", "qdd_max", "qddd_max"):
            if not np.all(getattr(self, name) > 0):
                raise ValueError(f"{name} must be positive")


def franka_limits() -> JointLimits:
    """Data-sheet joint limits of the Franka arm."""
    return JointLimits(
        q_min=np.array([-2.8973, -1.7628, -2.8973, -3.0718,
                        -2.8973, -0.0175, -2.8973]),
        q_max=np.array([2.8973, 1.7628, 2.8973, -0.0698,
                        2.8973, 3.7525, 2.8973]),
        qd_max=np.array([2.1750, 2.1750, 2.1750, 2.1750,
                         2.6100, 2.6100, 2.6100]),
        qdd_max=np.array([15.0, 7.5, 10.0, 12.5, 15.0, 20.0, 20.0]),
        qddd_max=np.array([7500.0, 3750.0, 5000.0, 6250.0,
                           7500.0, 10000.0, 10000.0]),
    )


@dataclass(frozen=True)
class Pose:
    """End-effector pose: rotation matrix R and translation p (meters)."""

    R: np.ndarray
    p: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "R", np.asarray(self.R, dtype=float))
        object.__setattr__(self, "p", np.asarray(self.p, dtype=float))
        if self.R.shape != (3, 3) or self.p.shape != (3,):
            raise ValueError("Pose needs a 3x3 R and a 3-vector p")

    def validate(self, tol: float = 1e-9) -> None:
        err = np.abs(self.R.T @ self.R - np.eye(3)).max()
        if err > tol:
            raise ValueError(f"rotation not orthonormal (err={err:.2e})")
        if abs(np.linalg.det(self.R) - 1.0) > tol:
            raise ValueError("rotation determinant is not +1")

    def as_matrix(self) -> np.ndarray:
        T = np.eye(4)
        T[:3, :3] = self.R
        T[:3, 3] = self.p
        return T

    @staticmethod
    def from_matrix(T: np.ndarray) -> "Pose":
        T = np.asarray(T, dtype=float)
        return Pose(R=T[:3, :3].copy(), p=T[:3, 3].copy())


def mdh_transform(alpha: float, a: float, theta: float, d: float) -> np.ndarray:
    """Homogeneous transform of one modified-DH row."""
    ct, st = math.cos(theta), math.sin(theta)
    ca, sa = math.cos(alpha), math.sin(alpha)
    return np.array([
        [ct, -st, 0.0, a],
        [st * ca, ct * ca, -sa, -d * sa],
        [st * sa, ct * sa, ca, d * ca],
        [0.0, 0.0, 0.0, 1.0],
    ])


def _frames(model: DHModel, q: np.ndarray) -> list[np.ndarray]:
    """Cumulative transforms base->frame i for i = 1..7 plus the flange."""
    out = []
    T = np.eye(4)
    for i in range(7):
        T = T @ mdh_transform(model.alpha[i], model.a[i], q[i], model.d[i])
        out.append(T)
    out.append(T @ mdh_transform(0.0, 0.0, 0.0, model.flange_d))
    return out


def forward_kinematics(model: DHModel, q: np.ndarray) -> Pose:
    """End-effector (flange) pose for joint angles q."""
    q = np.asarray(q, dtype=float)
    if q.shape != (7,):
        raise ValueError("q must have 7 entries")
    T = _frames(model, q)[-1]
    return Pose.from_matrix(T)


def jacobian(model: DHModel, q: np.ndarray) -> np.ndarray:
    """Geometric Jacobian in the base frame.

    Rows 1-3 map joint rates to linear velocity (m/s), rows 4-6 to angular
    velocity (rad/s).
    """
    q = np.asarray(q, dtype=float)
    frames = _frames(model, q)
    p_ee = frames[-1][:3, 3]
    J = np.empty((6, 7))
    for i in range(7):
        z = frames[i][:3, 2]
        r = p_ee - frames[i][:3, 3]
        J[0, i] = z[1] * r[2] - z[2] * r[1]
        J[1, i] = z[2] * r[0] - z[0] * r[2]
        J[2, i] = z[0] * r[1] - z[1] * r[0]
        J[3:, i] = z
    return J


def smallest_singular_value(J: np.ndarray) -> float:
    return float(np.linalg.svd(J, compute_uv=False)[-1])


def is_singular(model: DHModel, q: np.ndarray, tol: float = DEFAULT_SINGULARITY_TOL) -> bool:
    """True iff the smallest singular value of the Jacobian is below tol."""
    if tol <= 0:
        raise ValueError("tol must be positive")
    return smallest_singular_value(jacobian(model, q)) < tol


def _rotz(t: float) -> np.ndarray:
    c, s = math.cos(t), math.sin(t)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


_RX_P = np.array([[1.0, 0.0, 0.0], [0.0, 0.0, -1.0], [0.0, 1.0, 0.0]])   # Rx(+pi/2)
_RX_N = _RX_P.T                                                          # Rx(-pi/2)

_IK_TOL_POS = 1e-9
_IK_TOL_ROT = 1e-9
_CLIP_EPS = 1e-9


def _clip1(x: float) -> float | None:
    """Clamp to [-1, 1]; None when out of range beyond numerical slack."""
    if x > 1.0:
        return 1.0 if x < 1.0 + _CLIP_EPS else None
    if x < -1.0:
        return -1.0 if x > -1.0 - _CLIP_EPS else None
    return x


def _ik_candidates(model: DHModel, T: Pose, q7: float,
                   limits: JointLimits) -> list[np.ndarray]:
    """All closed-form joint vectors reaching T with the given q7.

    Candidates are unfiltered except for angle limits and an exactness check
    against forward kinematics; singularity filtering happens in the caller.
    """
    R, p = T.R, T.p
    x_ee, y_ee, z_ee = R[:, 0], R[:, 1], R[:, 2]
    c7, s7 = math.cos(q7), math.sin(q7)

    # Fixing q7 freezes frame 6 entirely.
    x6 = c7 * x_ee - s7 * y_ee
    R6 = np.column_stack((x6, -z_ee, s7 * x_ee + c7 * y_ee))
    o6 = (p - model.flange_d * z_ee) - A7 * x6

    shoulder = np.array([0.0, 0.0, D1])
    v26 = o6 - shoulder
    ll26 = float(v26 @ v26)

    cos246 = _clip1((_LL24 + _LL46 - ll26) / (2.0 * _L24 * _L46))
    if cos246 is None:
        return []
    theta246 = math.acos(cos246)
    q4_candidates = [theta246 + _ELBOW_OFFSET - 2.0 * math.pi,
                     _ELBOW_OFFSET - theta246]

    # o2 expressed in frame 6 (known).
    X, Y, Z = R6.T @ (shoulder - o6)
    rho = math.hypot(X, Y)
    phi = math.atan2(Y, X)

    out: list[np.ndarray] = []
    for q4 in q4_candidates:
        if not (limits.q_min[3] <= q4 <= limits.q_max[3]):
            continue
        u = -A4 * math.cos(q4) - D3 * math.sin(q4)
        v = A4 * math.sin(q4) - D3 * math.cos(q4)
        dd = v - D5                      # o2 y-component in frame 5
        if rho < 1e-12:
            continue
        s_arg = _clip1(dd / rho)
        if s_arg is None:
            continue
        th6 = math.asin(s_arg)
        for q6_base in (th6 - phi, math.pi - th6 - phi):
            q6_base = math.atan2(math.sin(q6_base), math.cos(q6_base))
            for q6 in (q6_base, q6_base + 2.0 * math.pi):
                if not (limits.q_min[5] <= q6 <= limits.q_max[5]):
                    continue
                c6, s6 = math.cos(q6), math.sin(q6)
                w1 = c6 * X - s6 * Y
                q5 = math.atan2(Z, w1)
                if not (limits.q_min[4] <= q5 <= limits.q_max[4]):
                    continue
                R45 = _RX_N @ _rotz(q5)
                R56 = _RX_P @ _rotz(q6)
                R4 = R6 @ R56.T @ R45.T
                o4 = o6 - R4 @ np.array([A5, D5, 0.0])
                R3 = R4 @ _rotz(-q4) @ _RX_N
                o3 = o4 - R3 @ np.array([A4, 0.0, 0.0])
                vec = o3 - shoulder
                c2 = _clip1(vec[2] / D3)
                if c2 is None:
                    continue
                q2a = math.acos(c2)
                for q2 in (q2a, -q2a):
                    if not (limits.q_min[1] <= q2 <= limits.q_max[1]):
                        continue
                    s2 = math.sin(q2)
                    if abs(s2) < 1e-10:
                        q1 = 0.0
                    elif s2 > 0:
                        q1 = math.atan2(vec[1], vec[0])
                    else:
                        q1 = math.atan2(-vec[1], -vec[0])
                    if not (limits.q_min[0] <= q1 <= limits.q_max[0]):
                        continue
                    R2 = _rotz(q1) @ _RX_N @ _rotz(q2)
                    M = _RX_N @ R2.T @ R3
                    q3 = math.atan2(M[1, 0], M[0, 0])
                    if not (limits.q_min[2] <= q3 <= limits.q_max[2]):
                        continue
                    out.append(np.array([q1, q2, q3, q4, q5, q6, q7]))
    return out


def ik_branch(model: DHModel, T: Pose, q7: float, limits: JointLimits,
              singularity_tol: float = DEFAULT_SINGULARITY_TOL,
              ref: np.ndarray | None = None) -> np.ndarray | None:
    """Deterministic closed-form inverse kinematics for a fixed q7.

    Returns the selected joint vector, or None when no solution survives the
    angle limits and the singularity exclusion.  Selection rule among valid
    candidates: prefer the shoulder branch with q2 >= 0, then the wrist
    branch with q6 closest to its midrange, ties broken by the
    lexicographically smallest joint vector.  When a reference configuration
    is given the nearest valid candidate to it is returned instead.
    """
    candidates = _ik_candidates(model, T, q7, limits)
    if not candidates:
        return None
    q6_mid = 0.5 * (limits.q_min[5] + limits.q_max[5])

    if ref is not None:
        def rank(q: np.ndarray):
            return (float(np.abs(q - ref).max()), tuple(q))
    else:
        def rank(q: np.ndarray):
            return (0 if q[1] >= 0.0 else 1, abs(q[5] - q6_mid), tuple(q))

    for q in sorted(candidates, key=rank):
        pose = forward_kinematics(model, q)
        if np.abs(pose.p - T.p).max() > _IK_TOL_POS:
            continue
        if np.linalg.norm(pose.R - T.R) > _IK_TOL_ROT:
            continue
        if is_singular(model, q, singularity_tol):
            continue
        return q
    return None


def ik_parameterized(model: DHModel, T: Pose, q7: float, limits: JointLimits,
                     singularity_tol: float = DEFAULT_SINGULARITY_TOL,
                     ref: np.ndarray | None = None) -> np.ndarray | None:
    """Full 7-vector inverse kinematics with q7 as the redundancy parameter.

    Rejects q7 outside the joint-7 range; otherwise identical to ik_branch
    with the seventh component equal to q7 exactly.
    """
    if not (limits.q_min[6] <= q7 <= limits.q_max[6]):
        return None
    return ik_branch(model, T, q7, limits, singularity_tol, ref)
