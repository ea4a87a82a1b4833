"""Per-cycle motion compensation.

Turns sampled joint targets into jerk/acceleration/velocity-bounded
commands at the communication rate, shapes the limits near motion end so
the arm stops cleanly, and provides the closed-form tracking error bounds.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .kinematics import JointLimits

_EPS = 1e-9


@dataclass(frozen=True)
class ManipulatorState:
    """Joint-space state read back each communication cycle."""

    q: np.ndarray
    qd: np.ndarray
    qdd: np.ndarray

    def __post_init__(self):
        for name in ("q", "qd", "qdd"):
            object.__setattr__(self, name,
                               np.asarray(getattr(self, name), dtype=float))


@dataclass(frozen=True)
class ControlClock:
    """Timing context for one compensation step.

    t_r is the time left until the next sampling point; n_0 the number of
    communication cycles left until the end of the whole motion.
    """

    t_0: float
    t_r: float
    n_0: int

    def __post_init__(self):
        if self.t_0 <= 0:
            raise ValueError("t_0 must be positive")
        if self.t_r < self.t_0 - 1e-12:
            raise ValueError("t_r must be at least one communication period")
        if self.n_0 < 0:
            raise ValueError("n_0 must be non-negative")


@dataclass(frozen=True)
class DerivedLimits:
    """Effective per-joint bounds after stop shaping plus the cautionary
    velocity ceiling."""

    qdd_eff: np.ndarray
    qd_eff: np.ndarray
    qd_caution: np.ndarray


def derived_limits(limits: JointLimits, clock: ControlClock,
                   qd_caution: np.ndarray | None = None) -> DerivedLimits:
    """Stop-shaped acceleration/velocity ceilings for the current cycle.

    As the remaining cycle count n_0 runs out, acceleration is limited to
    what jerk can still remove, and velocity to what acceleration can still
    remove minus the jerk ramp-down reserve.
    """
    horizon = clock.n_0 * clock.t_0
    qdd_eff = np.minimum(limits.qdd_max, limits.qddd_max * horizon)
    qd_eff = np.minimum(
        limits.qd_max,
        limits.qdd_max * horizon - limits.qdd_max ** 2 / (2.0 * limits.qddd_max))
    qd_eff = np.maximum(qd_eff, 0.0)
    if qd_caution is None:
        qd_caution = cautionary_velocity(limits, clock.t_0)
    return DerivedLimits(qdd_eff=qdd_eff, qd_eff=qd_eff, qd_caution=qd_caution)


def velocity_reserve(limits: JointLimits, t_0: float) -> np.ndarray:
    """Velocity accumulated while jerk ramps the acceleration from its
    maximum down to zero, simulated cycle by cycle."""
    reserve = np.zeros(7)
    for c in range(7):
        a = limits.qdd_max[c]
        v = 0.0
        while a > 0.0:
            a = max(0.0, a - limits.qddd_max[c] * t_0)
            v += a * t_0
        reserve[c] = v
    return reserve


def velocity_reserve_closed_form(limits: JointLimits) -> np.ndarray:
    """Continuous-time counterpart of velocity_reserve."""
    return limits.qdd_max ** 2 / (2.0 * limits.qddd_max)


def cautionary_velocity(limits: JointLimits, t_0: float) -> np.ndarray:
    """Velocity ceiling that leaves room to stop accelerating in time.

    A joint running at this speed can bring its acceleration to zero
    without the ramp-down carrying the velocity past the hard limit.
    """
    return limits.qd_max - velocity_reserve(limits, t_0)


@dataclass(frozen=True)
class CompensateResult:
    """Command for the next cycle plus the clamped motion parameters."""

    q_d: np.ndarray
    qd_d: np.ndarray
    qdd_d: np.ndarray
    qddd_d: np.ndarray
    clamped: np.ndarray  # bool mask, per joint


def _clamp_cascade(vd: np.ndarray, vnow: np.ndarray, anow: np.ndarray,
                   t0: float, j_lim: np.ndarray, a_lim: np.ndarray,
                   v_lim: np.ndarray
                   ) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Clamp the demanded velocity by magnitude, then realize as much of it
    as the acceleration bound and the jerk-reachable acceleration interval
    allow.  Equivalent to iterating the jerk/accel/velocity clamps until
    they settle, but with guaranteed termination: when the demanded
    slowdown exceeds what acceleration allows, the maximum-braking command
    stands (velocity converges to its bound over the following cycles).
    """
    v_tgt = np.clip(vd, -v_lim, v_lim)
    ad = (v_tgt - vnow) / t0
    ad = np.clip(ad, -a_lim, a_lim)
    ad = np.clip(ad, anow - j_lim * t0, anow + j_lim * t0)
    out_v = vnow + ad * t0
    jd = (ad - anow) / t0
    clamped = np.abs(out_v - vd) > _EPS
    return out_v, ad, jd, clamped


def compensate_step(state: ManipulatorState, q_target: np.ndarray,
                    clock: ControlClock, limits: JointLimits,
                    dl: DerivedLimits) -> CompensateResult:
    """One communication cycle of motion compensation.

    Aims at reaching q_target in the remaining time t_r at constant
    velocity; the demanded velocity/acceleration/jerk are then clamped per
    joint and the command advanced one cycle at the clamped velocity.
    """
    q_target = np.asarray(q_target, dtype=float)
    t0 = clock.t_0
    vd = (q_target - state.q) / clock.t_r

    v_lim = np.minimum(dl.qd_eff, dl.qd_caution)
    out_v, out_a, out_j, mask = _clamp_cascade(
        vd, state.qd, state.qdd, t0, limits.qddd_max, dl.qdd_eff, v_lim)
    return CompensateResult(q_d=state.q + out_v * t0, qd_d=out_v,
                            qdd_d=out_a, qddd_d=out_j, clamped=mask)


def error_bounds(qd_max, qd_plan, qdd_max):
    """Worst-case tracking error and recovery time for opposed motion.

    Assumes the joint and the planned path run toward each other at their
    respective velocity ceilings; accepts scalars or per-joint arrays.
    """
    qd_max = np.asarray(qd_max, dtype=float)
    qd_plan = np.asarray(qd_plan, dtype=float)
    qdd_max = np.asarray(qdd_max, dtype=float)
    if np.any(qd_plan <= 0) or np.any(qd_max <= 0) or np.any(qdd_max <= 0):
        raise ValueError("velocity and acceleration bounds must be positive")
    if np.any(qd_plan >= qd_max):
        raise ValueError("qd_plan must be strictly below qd_max")
    err_max = (qd_max + qd_plan) ** 2 / (2.0 * qdd_max)
    t_max = 2.0 * qd_max ** 2 / (qdd_max * (qd_max - qd_plan))
    return err_max, t_max
