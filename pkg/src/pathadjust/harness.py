"""Scenario execution: configuration, offline planning, the simulated 1 kHz
run with a live adjustment stream, an online greedy baseline for
comparison, and the trajectory audit.

All artifacts (grid, table, trajectory, audit, reports) are plain
CSV/JSON/npy files; repeated runs with the same config and seed are
byte-identical.  Wall-clock timings are printed, never persisted.
"""

from __future__ import annotations

import csv
import hashlib
import json
import math
import os
import time
from dataclasses import dataclass, field

import numpy as np

from .compensator import (_EPS as _CLAMP_EPS, ControlClock, ManipulatorState,
                          cautionary_velocity, compensate_step, derived_limits)
from .feasibility import (FeasibilityGrid, build_grid, load_grid, save_grid)
from .kinematics import (DEFAULT_SINGULARITY_TOL, DHModel, JointLimits,
                         Pose, _ik_candidates, forward_kinematics,
                         franka_limits, franka_model, is_singular)
from .pathmodel import (AdjustmentGrid, DEFAULT_T0, PathSpec, RedundancyGrid,
                        adjusted_pose, circle_path, load_path_csv, task_path)
from .planner import (AdjustStepError, DPTable, InfeasibleStartError,
                      compute_dp, default_step_constraint, load_table,
                      max_adjust_step, next_joints, save_table, verify_table)

TRAJECTORY_CSV_HEADER = (
    ["cycle", "t", "i", "c"]
    + [f"q{c}" for c in range(1, 8)]
    + [f"qd{c}" for c in range(1, 8)]
    + [f"qdd{c}" for c in range(1, 8)]
    + [f"qddd{c}" for c in range(1, 8)]
    + ["clamped_mask"])

AUDIT_CSV_HEADER = ["i", "c", "err_m"]

# Exit codes shared with the CLI.
EXIT_OK = 0
EXIT_INFEASIBLE = 2
EXIT_SIGNAL = 3
EXIT_ARTIFACT = 4


class SignalError(Exception):
    """Adjustment signal invalid or violating the planned envelope."""


class ArtifactError(Exception):
    """Persisted artifacts inconsistent with the live configuration."""


@dataclass(frozen=True)
class ScenarioConfig:
    """Everything a run needs, loadable from a JSON file.

    path_kind is "circle", "task" or "csv"; signal_kind is "zero",
    "scripted" (CSV with a single `c` column) or "walk" (seeded bounded
    random walk).
    """

    path_kind: str = "circle"
    path_n: int = 100
    path_duration: float = 10.0
    path_file: str | None = None
    m: int = 61
    o: int = 10
    y_max: float = 0.05
    t_0: float = DEFAULT_T0
    qd_plan_fraction: float = 0.5
    margins: tuple[float, ...] | None = None
    singularity_tol: float = DEFAULT_SINGULARITY_TOL
    signal_kind: str = "zero"
    signal_file: str | None = None
    seed: int = 0
    step_bound: int | None = None

    def __post_init__(self):
        if self.path_kind not in ("circle", "task", "csv"):
            raise ValueError(f"unknown path kind {self.path_kind!r}")
        if self.path_kind == "csv" and not self.path_file:
            raise ValueError("path_kind csv needs path_file")
        if self.signal_kind not in ("zero", "scripted", "walk"):
            raise ValueError(f"unknown signal kind {self.signal_kind!r}")
        if self.signal_kind == "scripted" and not self.signal_file:
            raise ValueError("signal_kind scripted needs signal_file")
        if not 0.0 < self.qd_plan_fraction <= 1.0:
            raise ValueError("qd_plan_fraction must be in (0, 1]")

    def build_path(self) -> PathSpec:
        if self.path_kind == "circle":
            return circle_path(self.path_n, self.path_duration, self.t_0)
        if self.path_kind == "task":
            return task_path(self.t_0)
        return load_path_csv(self.path_file, self.t_0)

    def plan_hash(self) -> str:
        """Hash over the planning-relevant fields (path, grids, limits
        knobs) — the provenance check for persisted artifacts."""
        doc = {
            "path_kind": self.path_kind,
            "path_n": self.path_n,
            "path_duration": self.path_duration,
            "path_file": self.path_file,
            "m": self.m, "o": self.o, "y_max": self.y_max,
            "t_0": self.t_0,
            "qd_plan_fraction": self.qd_plan_fraction,
            "margins": list(self.margins) if self.margins is not None else None,
            "singularity_tol": self.singularity_tol,
        }
        blob = json.dumps(doc, sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()


def save_config(cfg: ScenarioConfig, fname) -> None:
    doc = {"schema": 1}
    for name in ("path_kind", "path_n", "path_duration", "path_file",
                 "m", "o", "y_max", "t_0", "qd_plan_fraction",
                 "singularity_tol", "signal_kind", "signal_file",
                 "seed", "step_bound"):
        doc[name] = getattr(cfg, name)
    doc["margins"] = list(cfg.margins) if cfg.margins is not None else None
    with open(fname, "w") as fh:
        json.dump(doc, fh, indent=1, sort_keys=True)
        fh.write("\n")


def load_config(fname) -> ScenarioConfig:
    with open(fname) as fh:
        doc = json.load(fh)
    if doc.pop("schema", None) != 1:
        raise ValueError("unsupported config schema")
    if doc.get("margins") is not None:
        doc["margins"] = tuple(doc["margins"])
    return ScenarioConfig(**doc)


@dataclass
class TrajectoryLog:
    """Per-cycle command history plus the per-sampling-point decisions.

    q/qd/qdd/qddd rows are the commanded values for each communication
    cycle; q0 is the state before the first cycle (needed to recompute
    discrete derivatives from positions alone).
    """

    t_0: float
    n_cycles: int
    q0: np.ndarray
    cycle: np.ndarray
    t: np.ndarray
    i: np.ndarray
    c: np.ndarray
    q: np.ndarray
    qd: np.ndarray
    qdd: np.ndarray
    qddd: np.ndarray
    clamped: np.ndarray
    sample_i: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=int))
    sample_j: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=int))
    sample_c: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=int))
    sample_targets: tuple[Pose, ...] = ()
    completed: bool = True


def save_trajectory_csv(log: TrajectoryLog, fname) -> None:
    with open(fname, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(TRAJECTORY_CSV_HEADER)
        for r in range(len(log.cycle)):
            mask = "".join("1" if b else "0" for b in log.clamped[r])
            row = [int(log.cycle[r]), repr(float(log.t[r])),
                   int(log.i[r]), int(log.c[r])]
            for arr in (log.q, log.qd, log.qdd, log.qddd):
                row += [repr(float(x)) for x in arr[r]]
            row.append(mask)
            w.writerow(row)


@dataclass
class AuditReport:
    """Normalized motion-parameter maxima plus path tracking error."""

    max_norm_q: np.ndarray
    max_norm_qd: np.ndarray
    max_norm_qdd: np.ndarray
    max_norm_qddd: np.ndarray
    violations: int
    sample_i: np.ndarray
    sample_c: np.ndarray
    err_m: np.ndarray
    completed: bool

    def save_csv(self, fname) -> None:
        with open(fname, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(AUDIT_CSV_HEADER)
            for i, c, e in zip(self.sample_i, self.sample_c, self.err_m):
                w.writerow([int(i), int(c), repr(float(e))])

    def to_dict(self) -> dict:
        return {
            "schema": 1,
            "max_norm_q": [float(x) for x in self.max_norm_q],
            "max_norm_qd": [float(x) for x in self.max_norm_qd],
            "max_norm_qdd": [float(x) for x in self.max_norm_qdd],
            "max_norm_qddd": [float(x) for x in self.max_norm_qddd],
            "violations": int(self.violations),
            "max_err_m": float(self.err_m.max()) if len(self.err_m) else 0.0,
            "completed": bool(self.completed),
        }


def run_plan(cfg: ScenarioConfig, out_dir, limits: JointLimits | None = None,
             model: DHModel | None = None, quiet: bool = False
             ) -> tuple[FeasibilityGrid, DPTable]:
    """Offline stage: build the feasibility grid, run the DP, persist both.

    Raises InfeasibleStartError when no start branch guarantees the path.
    Prints d_max / delta / j0 and stage timings; the persisted files
    contain no timing and are byte-identical across reruns.
    """
    if limits is None:
        limits = franka_limits()
    path = cfg.build_path()
    rg = RedundancyGrid(limits.q_min[6], limits.q_max[6], cfg.m)
    ag = AdjustmentGrid(cfg.y_max, cfg.o)

    t0 = time.perf_counter()
    grid = build_grid(path, rg, ag, limits, model, cfg.singularity_tol)
    t1 = time.perf_counter()
    sc = default_step_constraint(limits, path.t_s, cfg.qd_plan_fraction)
    if cfg.margins is not None:
        sc = type(sc)(t_s=sc.t_s, qd_plan=sc.qd_plan,
                      margins=np.asarray(cfg.margins, dtype=float))
    table = compute_dp(grid, sc)  # raises InfeasibleStartError
    t2 = time.perf_counter()

    os.makedirs(out_dir, exist_ok=True)
    save_grid(grid, os.path.join(out_dir, "grid.npy"),
              os.path.join(out_dir, "grid.json"))
    save_table(table, os.path.join(out_dir, "table.json"))
    d_max, j0, delta = max_adjust_step(table, ag.y_max)
    summary = {
        "schema": 1,
        "plan_hash": cfg.plan_hash(),
        "grid_hash": grid.provenance_hash(),
        "d_max": d_max, "j0": j0, "delta": delta,
        "n": path.n, "m": cfg.m, "o": cfg.o,
    }
    with open(os.path.join(out_dir, "summary.json"), "w") as fh:
        json.dump(summary, fh, indent=1, sort_keys=True)
        fh.write("\n")
    if not quiet:
        print(f"d_max = {d_max} (delta = {delta:.4f} m), start branch j0 = {j0}")
        print(f"grid {t1 - t0:.1f} s, dp {t2 - t1:.1f} s")
    return grid, table


def load_plan(cfg: ScenarioConfig, out_dir,
              limits: JointLimits | None = None
              ) -> tuple[FeasibilityGrid, DPTable]:
    """Reload persisted plan artifacts, verifying provenance against the
    live config.  Raises ArtifactError on any mismatch."""
    if limits is None:
        limits = franka_limits()
    with open(os.path.join(out_dir, "summary.json")) as fh:
        summary = json.load(fh)
    if summary.get("plan_hash") != cfg.plan_hash():
        raise ArtifactError("artifacts were planned under a different config")
    path = cfg.build_path()
    grid = load_grid(os.path.join(out_dir, "grid.npy"),
                     os.path.join(out_dir, "grid.json"), path, limits)
    table = load_table(os.path.join(out_dir, "table.json"))
    if table.grid_hash != grid.provenance_hash():
        raise ArtifactError("table was computed from a different grid")
    return grid, table


def adjustment_signal(cfg: ScenarioConfig, d_max: int, o: int,
                      n: int) -> np.ndarray:
    """The c_i stream, one value per sampling point (i = 0..n).

    Starts at 0; every step stays within min(d_max, configured bound) and
    every value within [-o, o].  Random walks are seeded and reflected at
    the grid boundary.  Scripted sequences violating these constraints are
    rejected naming the first offending index.
    """
    s = d_max if cfg.step_bound is None else min(d_max, cfg.step_bound)
    if s < 0:
        raise SignalError("negative step bound")
    if cfg.signal_kind == "zero":
        return np.zeros(n + 1, dtype=int)
    if cfg.signal_kind == "scripted":
        with open(cfg.signal_file, newline="") as fh:
            r = csv.reader(fh)
            header = next(r)
            if header != ["c"]:
                raise SignalError(f"unexpected signal header: {header}")
            c = np.array([int(row[0]) for row in r])
        if len(c) != n + 1:
            raise SignalError(f"signal length {len(c)} != {n + 1}")
        if c[0] != 0:
            raise SignalError("signal index 0: c_0 must be 0")
        for i in range(1, n + 1):
            if abs(c[i]) > o:
                raise SignalError(f"signal index {i}: |c| = {abs(c[i])} > o = {o}")
            if abs(c[i] - c[i - 1]) > s:
                raise SignalError(f"signal index {i}: step "
                                  f"{abs(c[i] - c[i - 1])} > bound {s}")
        return c
    # bounded random walk
    rng = np.random.default_rng(cfg.seed)
    c = np.zeros(n + 1, dtype=int)
    for i in range(1, n + 1):
        v = c[i - 1] + int(rng.integers(-s, s + 1))
        if v > o:
            v = 2 * o - v
        elif v < -o:
            v = -2 * o - v
        c[i] = v
    return c


def envelope_walk(grid: FeasibilityGrid, table: DPTable,
                  seed: int) -> np.ndarray:
    """Random adjustment signal that exercises the guaranteed envelope.

    Walks the executed branch chain and at every sampling point draws the
    next index uniformly within the envelope L at the current state (and
    the grid bound).  Unlike the statically bounded walk this uses the
    full, position-dependent guarantee, so it is the strongest admissible
    stress signal.
    """
    path = grid.path
    o = table.o
    rng = np.random.default_rng(seed)
    c = np.zeros(path.n + 1, dtype=int)
    j, k = table.j0, 0
    for i in range(path.n):
        d = int(table.L[i, j - 1, k + o])
        if d < 0:
            raise SignalError(f"state at sampling point {i} has no "
                              "guaranteed continuation")
        lo, hi = max(-o, k - d), min(o, k + d)
        k2 = int(rng.integers(lo, hi + 1))
        j, _ = next_joints(table, grid, i, j, k, k2)
        c[i + 1] = k2
        k = k2
    return c


def _shaping_horizon(limits: JointLimits, t_0: float) -> int:
    """Cycle count beyond which stop shaping no longer binds any joint."""
    reserve = limits.qd_max ** 2 / (2.0 * limits.qdd_max)  # upper bound
    n_v = (limits.qd_max + reserve) / (limits.qdd_max * t_0)
    n_a = limits.qdd_max / (limits.qddd_max * t_0)
    return int(np.ceil(max(n_v.max(), n_a.max()))) + 2


def simulate(cfg: ScenarioConfig, grid: FeasibilityGrid, table: DPTable,
             signal: np.ndarray, limits: JointLimits | None = None,
             max_tail: int = 2000) -> TrajectoryLog:
    """The 1 kHz event loop with a kinematic plant.

    At each sampling point the next adjustment index is read from the
    signal and the successor branch resolved; every cycle the compensator
    turns the sampled target into a bounded command.  After the final
    sampling point the limits stay stop-shaped (one-cycle horizon) until
    velocity and acceleration fall below one-cycle resolution.
    """
    if limits is None:
        limits = franka_limits()
    if table.grid_hash != grid.provenance_hash():
        raise ArtifactError("table/grid provenance mismatch")
    path = grid.path
    n, n_cyc, t_0 = path.n, path.n_cycles, path.t_0
    if len(signal) != n + 1:
        raise SignalError(f"signal length {len(signal)} != {n + 1}")
    if signal[0] != 0:
        raise SignalError("signal index 0: c_0 must be 0")

    q0 = grid.cell(0, table.j0, 0)
    if q0 is None:
        raise InfeasibleStartError("start cell infeasible")
    total = n * n_cyc
    cap = total + max_tail
    qs = np.empty((cap, 7))
    qds = np.empty((cap, 7))
    qdds = np.empty((cap, 7))
    qddds = np.empty((cap, 7))
    clamps = np.zeros((cap, 7), dtype=bool)
    idx_i = np.empty(cap, dtype=int)
    idx_c = np.empty(cap, dtype=int)
    sample_j = np.empty(n + 1, dtype=int)
    sample_targets: list[Pose] = []

    caution = cautionary_velocity(limits, t_0)
    steady_clock = ControlClock(t_0=t_0, t_r=t_0, n_0=10 ** 9)
    dl_steady = derived_limits(limits, steady_clock, caution)
    shaped = _shaping_horizon(limits, t_0)

    j, k = table.j0, 0
    sample_j[0] = j
    sample_targets.append(adjusted_pose(path.poses[0], 0.0))
    target = q0
    c_next = 0
    # the per-cycle loop applies the same clamp cascade as compensate_step
    # but on bare arrays, which keeps long runs fast
    q, v, a = q0, np.zeros(7), np.zeros(7)
    j_lim = limits.qddd_max
    v_steady = np.minimum(dl_steady.qd_eff, dl_steady.qd_caution)
    a_steady = dl_steady.qdd_eff
    tr_seg = (n_cyc - np.arange(n_cyc)) * t_0
    jstep = j_lim * t_0
    minimum, maximum, absolute = np.minimum, np.maximum, np.abs
    for i in range(n):
        c_next = int(signal[i + 1])
        j, target = next_joints(table, grid, i, j, k, c_next)
        sample_j[i + 1] = j
        sample_targets.append(adjusted_pose(
            path.poses[i + 1], grid.agrid.value(c_next)))
        base = i * n_cyc
        idx_i[base:base + n_cyc] = i
        idx_c[base:base + n_cyc] = k
        for ph in range(n_cyc):
            cyc = base + ph
            n_0 = total - cyc
            if n_0 > shaped:
                v_lim, a_lim = v_steady, a_steady
            else:
                clock = ControlClock(t_0=t_0, t_r=(n_cyc - ph) * t_0, n_0=n_0)
                dl = derived_limits(limits, clock, caution)
                v_lim = np.minimum(dl.qd_eff, dl.qd_caution)
                a_lim = dl.qdd_eff
            vd = (target - q) / tr_seg[ph]
            v_tgt = minimum(maximum(vd, -v_lim), v_lim)
            ad = (v_tgt - v) / t_0
            ad = minimum(maximum(ad, -a_lim), a_lim)
            ad = minimum(maximum(ad, a - jstep), a + jstep)
            v_new = v + ad * t_0
            q = q + v_new * t_0
            qs[cyc], qds[cyc] = q, v_new
            qdds[cyc] = ad
            qddds[cyc] = (ad - a) / t_0
            clamps[cyc] = absolute(v_new - vd) > _CLAMP_EPS
            v, a = v_new, ad
        k = c_next
    state = ManipulatorState(q=q, qd=v, qdd=a)

    # stop tail: hold the final target with a one-cycle horizon until the
    # state is at rest to one-cycle resolution
    tail_clock = ControlClock(t_0=t_0, t_r=t_0, n_0=1)
    dl_tail = derived_limits(limits, tail_clock, caution)
    v_tol = limits.qdd_max * t_0
    a_tol = limits.qddd_max * t_0
    used = total
    completed = True
    while (np.abs(state.qd) > v_tol).any() or (np.abs(state.qdd) > a_tol).any():
        if used >= cap:
            completed = False
            break
        res = compensate_step(state, target, tail_clock, limits, dl_tail)
        qs[used], qds[used] = res.q_d, res.qd_d
        qdds[used], qddds[used] = res.qdd_d, res.qddd_d
        clamps[used] = res.clamped
        idx_i[used] = n
        idx_c[used] = k
        state = ManipulatorState(q=res.q_d, qd=res.qd_d, qdd=res.qdd_d)
        used += 1

    return TrajectoryLog(
        t_0=t_0, n_cycles=n_cyc, q0=q0,
        cycle=np.arange(used), t=np.arange(used) * t_0,
        i=idx_i[:used], c=idx_c[:used],
        q=qs[:used], qd=qds[:used], qdd=qdds[:used], qddd=qddds[:used],
        clamped=clamps[:used],
        sample_i=np.arange(n + 1), sample_j=sample_j,
        sample_c=np.asarray(signal, dtype=int),
        sample_targets=tuple(sample_targets),
        completed=completed)


def validate_trajectory(log: TrajectoryLog, limits: JointLimits,
                        model: DHModel | None = None) -> AuditReport:
    """Audit a log against the hard bounds and the desired path.

    Derivatives are recomputed by finite differences from the commanded
    positions alone (trusting nothing else in the log), normalized by the
    per-joint bounds, and checked against [-1, 1].  Tracking error is the
    Cartesian distance between the commanded pose at each sampling point's
    arrival cycle and the adjusted target.
    """
    if model is None:
        model = franka_model()
    t_0 = log.t_0
    q = log.q
    qd = np.diff(np.vstack([log.q0, q]), axis=0) / t_0
    qdd = np.diff(np.vstack([np.zeros(7), qd]), axis=0) / t_0
    qddd = np.diff(np.vstack([np.zeros(7), qdd]), axis=0) / t_0

    span = limits.q_max - limits.q_min
    norm_q = 2.0 * (q - limits.q_min) / span - 1.0
    norm_qd = qd / limits.qd_max
    norm_qdd = qdd / limits.qdd_max
    norm_qddd = qddd / limits.qddd_max
    tol = 1.0 + 1e-9
    violations = 0
    maxima = []
    for arr in (norm_q, norm_qd, norm_qdd, norm_qddd):
        a = np.abs(arr)
        maxima.append(a.max(axis=0) if len(a) else np.zeros(7))
        violations += int((a > tol).sum())

    n_samp = len(log.sample_i)
    err = np.zeros(n_samp)
    for s in range(n_samp):
        i = int(log.sample_i[s])
        row = i * log.n_cycles - 1
        q_at = log.q0 if row < 0 else q[min(row, len(q) - 1)]
        pose = forward_kinematics(model, q_at)
        err[s] = float(np.linalg.norm(pose.p - log.sample_targets[s].p))

    return AuditReport(
        max_norm_q=maxima[0], max_norm_qd=maxima[1],
        max_norm_qdd=maxima[2], max_norm_qddd=maxima[3],
        violations=violations,
        sample_i=log.sample_i.copy(), sample_c=log.sample_c.copy(),
        err_m=err, completed=log.completed)


@dataclass
class BaselineResult:
    """Outcome of the greedy online resolver."""

    qs: np.ndarray           # joint vectors reached, one per completed point
    halted: bool
    halt_index: int          # first sampling point that could not be reached
    limiting_joint: int      # 1-based, 0 when completed


def baseline_online(path: PathSpec, q0: np.ndarray,
                    limits: JointLimits | None = None,
                    model: DHModel | None = None,
                    singularity_tol: float = DEFAULT_SINGULARITY_TOL
                    ) -> BaselineResult:
    """Greedy online resolution without redundancy management.

    Emulates a Cartesian pose generator that carries the task-frame yaw
    entirely on the wrist: the last joint advances by the incremental
    rotation of the target frame about its own z-axis, and the remaining
    joints come from the nearest closed-form solution at that q7 (no
    lookahead).  Halts when the wrist leaves its range, when no solution
    exists, or when a joint would exceed its velocity step.
    """
    if limits is None:
        limits = franka_limits()
    if model is None:
        model = franka_model()
    t_s = path.t_s
    step = limits.qd_max * t_s
    q = np.asarray(q0, dtype=float)
    qs = [q]
    for i in range(1, path.n + 1):
        T = path.poses[i]
        rel = path.poses[i - 1].R.T @ T.R
        q7 = q[6] + math.atan2(rel[1, 0], rel[0, 0])
        if not limits.q_min[6] <= q7 <= limits.q_max[6]:
            return BaselineResult(qs=np.array(qs), halted=True,
                                  halt_index=i, limiting_joint=7)
        best = None
        best_dist = np.inf
        for cand in _ik_candidates(model, T, q7, limits):
            dist = float(np.linalg.norm(cand - q))
            if dist >= best_dist:
                continue
            if is_singular(model, cand, singularity_tol):
                continue
            best, best_dist = cand, dist
        if best is None:
            # no solution at the scheduled wrist angle: joint 7 is the
            # limiting joint when the pose is reachable at some other q7
            reachable = any(
                _ik_candidates(model, T, float(p7), limits)
                for p7 in np.linspace(limits.q_min[6], limits.q_max[6], 61))
            return BaselineResult(qs=np.array(qs), halted=True,
                                  halt_index=i,
                                  limiting_joint=7 if reachable else 0)
        over_step = np.abs(best - q) - step
        if over_step.max() > 0:
            return BaselineResult(qs=np.array(qs), halted=True,
                                  halt_index=i,
                                  limiting_joint=int(np.argmax(over_step)) + 1)
        q = best
        qs.append(q)
    return BaselineResult(qs=np.array(qs), halted=False,
                          halt_index=path.n, limiting_joint=0)
