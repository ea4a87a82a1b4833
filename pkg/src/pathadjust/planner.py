"""Backward dynamic program over the feasibility atlas.

Computes, for every atlas cell, the largest per-step adjustment envelope
that still guarantees the rest of the path can be completed, together with
successor pointers that make the runtime next-step query an O(1) table
lookup.  Also ships an exhaustive brute-force oracle and a table verifier.
"""

from __future__ import annotations

import hashlib
import itertools
import json
from dataclasses import dataclass

import numpy as np

from .feasibility import FeasibilityGrid
from .kinematics import JointLimits

ABSENT = -2    # atlas cell infeasible or outside reduced angle bounds
STUCK = -1     # cell feasible but no admissible continuation at all


class PlannerError(Exception):
    pass


class InfeasibleStartError(PlannerError):
    """The path cannot be completed even with zero adjustment."""


class AdjustStepError(PlannerError):
    """A requested adjustment step exceeds the guaranteed envelope."""


@dataclass(frozen=True)
class StepConstraint:
    """Per-step limits the DP enforces between adjacent sampling points."""

    t_s: float
    qd_plan: np.ndarray      # planning velocity bound, rad/s per joint
    margins: np.ndarray      # reduction of the angle bounds, rad per joint

    def __post_init__(self):
        object.__setattr__(self, "qd_plan", np.asarray(self.qd_plan, dtype=float))
        object.__setattr__(self, "margins", np.asarray(self.margins, dtype=float))
        if self.t_s <= 0:
            raise ValueError("t_s must be positive")
        if np.any(self.qd_plan <= 0) or np.any(self.margins < 0):
            raise ValueError("qd_plan must be positive, margins non-negative")


def default_step_constraint(limits: JointLimits, t_s: float,
                            qd_plan_fraction: float = 0.5) -> StepConstraint:
    """Planning velocity as a fraction of the hard limit, plus a stopping
    reserve on the angle bounds sized by the worst-case deceleration."""
    qd_plan = qd_plan_fraction * limits.qd_max
    margins = limits.qd_max ** 2 / (2.0 * limits.qdd_max)
    return StepConstraint(t_s=t_s, qd_plan=qd_plan, margins=margins)


@dataclass(frozen=True)
class DPTable:
    """Value function L plus successor branch pointers.

    L has shape (n+1, m, 2o+1) with sentinels ABSENT and STUCK; stage n
    holds the cap value for admissible cells.  succ[i, j, k, k'] is the
    0-based successor branch for the move (i, j, k) -> (i+1, ., k'), or -1
    where the move is outside the guaranteed envelope.
    """

    L: np.ndarray
    succ: np.ndarray
    d_max: int
    j0: int                   # 1-based starting branch index
    sc: StepConstraint
    o: int
    grid_hash: str

    def provenance_hash(self) -> str:
        h = hashlib.sha256()
        h.update(self.grid_hash.encode())
        h.update(repr((float(self.sc.t_s),
                       tuple(float(x) for x in self.sc.qd_plan),
                       tuple(float(x) for x in self.sc.margins))).encode())
        return h.hexdigest()


def _admissible_mask(grid: FeasibilityGrid, sc: StepConstraint) -> np.ndarray:
    """Present cells whose joints lie within the margin-reduced angle bounds."""
    lo = grid.limits.q_min + sc.margins
    hi = grid.limits.q_max - sc.margins
    with np.errstate(invalid="ignore"):
        ok = (grid.joints >= lo) & (grid.joints <= hi)
    return ok.all(axis=-1) & grid.present


def _envelope(best: np.ndarray, kk: int, cap: int) -> int:
    """Largest d with min(best[kk-d : kk+d]) >= d, window clipped to the grid."""
    K = best.shape[0]
    cur = best[kk]
    if cur < 0:
        return STUCK
    d = 0
    while d < cap:
        nd = d + 1
        mn = cur
        if kk - nd >= 0:
            mn = min(mn, best[kk - nd])
        if kk + nd < K:
            mn = min(mn, best[kk + nd])
        if mn >= nd:
            d, cur = nd, mn
        else:
            break
    return d


def compute_dp(grid: FeasibilityGrid, sc: StepConstraint) -> DPTable:
    """Backward recursion over all atlas cells.

    At every stage the full offset fan |e| <= d is re-checked for each
    candidate d, so the value is exact even when inner offsets are the
    binding ones.  Raises InfeasibleStartError when no start cell admits
    even the zero-adjustment continuation.
    """
    Q = grid.joints
    n1, m, K = Q.shape[:3]
    n = n1 - 1
    o = grid.agrid.o
    cap = 2 * o
    adm = _admissible_mask(grid, sc)
    step_lim = sc.qd_plan * sc.t_s

    L = np.full((n1, m, K), ABSENT, dtype=np.int16)
    L[n][adm[n]] = cap
    succ = np.full((n, m, K, K), -1, dtype=np.int16)
    # smoothness cost-to-go: total squared joint-space step length to the
    # path end, assuming the adjustment index holds from here on
    V = np.full((n1, m, K), np.inf)
    V[n][adm[n]] = 0.0

    # q7 is the grid coordinate itself, so the step constraint alone
    # restricts successors to a window of branch indices; cells outside it
    # can never satisfy the per-joint step check.
    da = (grid.rgrid.q7_max - grid.rgrid.q7_min) / (m - 1)
    w = int(step_lim[6] / da) + 1
    for i in range(n - 1, -1, -1):
        Qn = Q[i + 1]
        LnF = L[i + 1].astype(float)
        LnF[(L[i + 1] < 0) | ~adm[i + 1]] = -np.inf
        for jj in range(m):
            if not adm[i, jj].any():
                continue
            jlo, jhi = max(0, jj - w), min(m, jj + w + 1)
            qrow = Q[i, jj]                                     # (K, 7)
            with np.errstate(invalid="ignore"):
                diff = np.abs(Qn[None, jlo:jhi] - qrow[:, None, None, :])
            ok = (diff <= step_lim).all(-1)                      # (K, win, K)
            ok &= adm[i + 1, jlo:jhi][None]
            best = np.where(ok, LnF[None, jlo:jhi], -np.inf).max(axis=1)
            # Stored successor: among branches whose value is at least the
            # current cell's value (so the guaranteed envelope survives
            # along any executed chain), minimize squared step length plus
            # the smoothness cost-to-go.  Pure per-step greediness is not
            # enough: where the feasible band narrows ahead, the chain
            # must start descending early or it gets pinned against the
            # hypersensitive band edge.  Ties go to the smaller branch
            # index.
            dn = np.where(ok, (diff ** 2).sum(-1), np.inf)
            for kk in range(K):
                if not adm[i, jj, kk]:
                    continue
                val = _envelope(best[kk], kk, cap)
                L[i, jj, kk] = val
                for e in range(-val, val + 1):
                    k2 = kk + e
                    if not 0 <= k2 < K:
                        continue
                    cost = np.where(ok[kk, :, k2] & (LnF[jlo:jhi, k2] == best[kk, k2]),
                                    dn[kk, :, k2] + V[i + 1, jlo:jhi, k2],
                                    np.inf)
                    je = int(np.argmin(cost))
                    succ[i, jj, kk, k2] = jlo + je
                    if k2 == kk:
                        V[i, jj, kk] = cost[je]

    start = L[0, :, o]
    if not np.any(start >= 0):
        raise InfeasibleStartError("no feasible start: every start cell is "
                                   "infeasible or stuck")
    d_max = int(start.max())
    j0 = int(np.argmax(start)) + 1
    return DPTable(L=L, succ=succ, d_max=d_max, j0=j0, sc=sc, o=o,
                   grid_hash=grid.provenance_hash())


def max_adjust_step(table: DPTable, agrid_y_max: float | None = None
                    ) -> tuple[int, int, float | None]:
    """The guaranteed envelope: index step d_max, start branch j0 and, when
    the grid spacing is supplied, the metric step delta."""
    delta = None
    if agrid_y_max is not None:
        delta = table.d_max * agrid_y_max / table.o
    return table.d_max, table.j0, delta


def next_joints(table: DPTable, grid: FeasibilityGrid, i: int, j: int,
                k: int, k_next: int) -> tuple[int, np.ndarray]:
    """O(1) successor query for the trajectory state (i, j, k).

    j is the 1-based branch at sampling point i; returns the 1-based branch
    and joint vector for sampling point i+1 at adjustment index k_next.
    """
    o = table.o
    if abs(k_next) > o:
        raise AdjustStepError(f"|k_next| = {abs(k_next)} exceeds grid bound o = {o}")
    Lv = int(table.L[i, j - 1, k + o])
    if Lv < 0:
        raise AdjustStepError(f"state (i={i}, j={j}, k={k}) has no guaranteed "
                              "continuation")
    if abs(k_next - k) > Lv:
        raise AdjustStepError(f"adjustment step {k_next - k} exceeds the "
                              f"guaranteed envelope L = {Lv} at i = {i}")
    je = int(table.succ[i, j - 1, k + o, k_next + o])
    if je < 0:
        raise AdjustStepError(f"no stored successor for (i={i}, j={j}, "
                              f"k={k}) -> k'={k_next}")
    q = grid.cell(i + 1, je + 1, k_next)
    if q is None:
        raise PlannerError("successor points at an infeasible cell")
    return je + 1, q


def brute_force_L(grid: FeasibilityGrid, sc: StepConstraint) -> np.ndarray:
    """Direct-definition oracle for the value function on tiny instances.

    For each cell and candidate d, enumerates every admissible adjustment
    sequence and searches branch assignments per sequence; no recursion
    sharing with the dynamic program.
    """
    Q = grid.joints
    n1, m, K = Q.shape[:3]
    n = n1 - 1
    o = grid.agrid.o
    if n > 6 or m > 6 or o > 3:
        raise ValueError("brute force oracle is for tiny instances only")
    cap = 2 * o
    adm = _admissible_mask(grid, sc)
    step_lim = sc.qd_plan * sc.t_s

    def step_ok(qa: np.ndarray, qb: np.ndarray) -> bool:
        return bool(np.all(np.abs(qb - qa) <= step_lim))

    def chain_search(i: int, q_prev: np.ndarray, seq: list[int], x: int) -> bool:
        if x == len(seq):
            return True
        kk = seq[x]
        stage = i + 1 + x
        for jj in range(m):
            if not adm[stage, jj, kk]:
                continue
            q = Q[stage, jj, kk]
            if step_ok(q_prev, q) and chain_search(i, q, seq, x + 1):
                return True
        return False

    def feasible_for_d(i: int, jj: int, kk: int, d: int) -> bool:
        depth = n - i

        # every adjustment sequence c_{i+1..n} with |step| <= d, |c| <= o
        # must admit some branch chain
        def seqs(prefix: list[int]) -> bool:
            if len(prefix) == depth:
                return chain_search(i, Q[i, jj, kk], prefix, 0)
            last = prefix[-1] if prefix else kk
            for e in range(-d, d + 1):
                k2 = last + e
                if 0 <= k2 < K:
                    if not seqs(prefix + [k2]):
                        return False
            return True

        return seqs([])

    L = np.full((n1, m, K), ABSENT, dtype=np.int16)
    L[n][adm[n]] = cap
    for i in range(n - 1, -1, -1):
        for jj in range(m):
            for kk in range(K):
                if not adm[i, jj, kk]:
                    continue
                val = STUCK
                for d in range(0, cap + 1):
                    if feasible_for_d(i, jj, kk, d):
                        val = d
                    else:
                        break
                L[i, jj, kk] = val
    return L


def verify_table(table: DPTable, grid: FeasibilityGrid,
                 sc: StepConstraint) -> list[str]:
    """Cell-by-cell audit of the table invariants; empty list means clean."""
    issues: list[str] = []
    Q = grid.joints
    n1, m, K = Q.shape[:3]
    n = n1 - 1
    o = table.o
    cap = 2 * o
    adm = _admissible_mask(grid, sc)
    step_lim = sc.qd_plan * sc.t_s

    for jj in range(m):
        for kk in range(K):
            want = cap if adm[n, jj, kk] else ABSENT
            if table.L[n, jj, kk] != want:
                issues.append(f"terminal L({n},{jj + 1},{kk - o}) != {want}")

    for i in range(n):
        for jj in range(m):
            for kk in range(K):
                Lv = int(table.L[i, jj, kk])
                if not adm[i, jj, kk]:
                    if Lv != ABSENT:
                        issues.append(f"L({i},{jj + 1},{kk - o}) set on "
                                      "inadmissible cell")
                    continue
                if Lv == ABSENT:
                    issues.append(f"L({i},{jj + 1},{kk - o}) missing on "
                                  "admissible cell")
                    continue
                for k2 in range(K):
                    je = int(table.succ[i, jj, kk, k2])
                    inside = Lv >= 0 and abs(k2 - kk) <= Lv
                    if not inside:
                        if je >= 0:
                            issues.append(f"succ({i},{jj + 1},{kk - o}->"
                                          f"{k2 - o}) stored outside envelope")
                        continue
                    if je < 0:
                        issues.append(f"succ({i},{jj + 1},{kk - o}->{k2 - o}) "
                                      "missing inside envelope")
                        continue
                    if not adm[i + 1, je, k2]:
                        issues.append(f"succ({i},{jj + 1},{kk - o}->{k2 - o}) "
                                      "points at inadmissible cell")
                        continue
                    if np.any(np.abs(Q[i + 1, je, k2] - Q[i, jj, kk]) >
                              step_lim + 1e-12):
                        issues.append(f"succ({i},{jj + 1},{kk - o}->{k2 - o}) "
                                      "violates the step constraint")
                    if int(table.L[i + 1, je, k2]) < Lv:
                        issues.append(f"succ({i},{jj + 1},{kk - o}->{k2 - o}) "
                                      "breaks value monotonicity")

    start = table.L[0, :, o]
    if np.any(start >= 0):
        if table.d_max != int(start.max()):
            issues.append("d_max does not equal max L(0, ., 0)")
        if int(start[table.j0 - 1]) != table.d_max:
            issues.append("L(0, j0, 0) != d_max")
    return issues


def save_table(table: DPTable, fname) -> None:
    """Persist the table as a single JSON document (schema 1)."""
    doc = {
        "schema": 1,
        "provenance": table.provenance_hash(),
        "grid_hash": table.grid_hash,
        "dims": list(table.L.shape),
        "o": table.o,
        "d_max": table.d_max,
        "j0": table.j0,
        "t_s": table.sc.t_s,
        "qd_plan": list(table.sc.qd_plan),
        "margins": list(table.sc.margins),
        "L": table.L.reshape(-1).tolist(),
        "succ": table.succ.reshape(-1).tolist(),
    }
    with open(fname, "w") as fh:
        json.dump(doc, fh, sort_keys=True, separators=(",", ":"))
        fh.write("\n")


def load_table(fname) -> DPTable:
    with open(fname) as fh:
        doc = json.load(fh)
    if doc.get("schema") != 1:
        raise ValueError("unsupported table schema")
    n1, m, K = doc["dims"]
    sc = StepConstraint(t_s=doc["t_s"], qd_plan=np.array(doc["qd_plan"]),
                        margins=np.array(doc["margins"]))
    L = np.array(doc["L"], dtype=np.int16).reshape(n1, m, K)
    succ = np.array(doc["succ"], dtype=np.int16).reshape(n1 - 1, m, K, K)
    return DPTable(L=L, succ=succ, d_max=doc["d_max"], j0=doc["j0"], sc=sc,
                   o=doc["o"], grid_hash=doc["grid_hash"])
