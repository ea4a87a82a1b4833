"""Dense feasibility atlas over (path point, q7 value, adjustment value).

Every cell holds the closed-form IK solution for the adjusted pose of path
point i with q7 fixed to the j-th grid value and the adjustment set to the
k-th grid value, or is marked infeasible.  The atlas is the state space of
the dynamic program.
"""

from __future__ import annotations

import csv
import hashlib
import json
from dataclasses import dataclass

import numpy as np

from .kinematics import (DEFAULT_SINGULARITY_TOL, DHModel, JointLimits,
                         franka_model, ik_parameterized)
from .pathmodel import AdjustmentGrid, PathSpec, RedundancyGrid, adjusted_pose

ATLAS_CSV_HEADER = ["i", "j", "k", "feasible",
                    "q1", "q2", "q3", "q4", "q5", "q6", "q7"]


@dataclass(frozen=True)
class FeasibilityGrid:
    """IK solutions indexed (i, j, k); NaN rows mark infeasible cells.

    joints has shape (n+1, m, 2o+1, 7).  The k axis is stored shifted by +o
    so that adjustment index k maps to array position k + o.
    """

    joints: np.ndarray
    path: PathSpec
    rgrid: RedundancyGrid
    agrid: AdjustmentGrid
    limits: JointLimits
    singularity_tol: float = DEFAULT_SINGULARITY_TOL

    @property
    def present(self) -> np.ndarray:
        return ~np.isnan(self.joints[..., 0])

    @property
    def dims(self) -> tuple[int, int, int]:
        return self.joints.shape[:3]

    def cell(self, i: int, j: int, k: int) -> np.ndarray | None:
        """Joint vector at path point i, branch j (1-based), adjustment k (signed)."""
        q = self.joints[i, j - 1, k + self.agrid.o]
        return None if np.isnan(q[0]) else q

    def provenance_hash(self) -> str:
        h = hashlib.sha256()
        for pose in self.path.poses:
            h.update(pose.R.tobytes())
            h.update(pose.p.tobytes())
        # plain-float coercion: the same values must hash identically
        # whether they arrive as numpy scalars or from JSON
        meta = (float(self.path.t_s), float(self.path.t_0),
                float(self.rgrid.q7_min), float(self.rgrid.q7_max),
                int(self.rgrid.m), float(self.agrid.y_max),
                int(self.agrid.o), float(self.singularity_tol))
        h.update(repr(meta).encode())
        for name in ("q_min", "q_max", "qd_max", "qdd_max", "qddd_max"):
            h.update(getattr(self.limits, name).tobytes())
        return h.hexdigest()


def build_grid(path: PathSpec, rg: RedundancyGrid, ag: AdjustmentGrid,
               limits: JointLimits, model: DHModel | None = None,
               singularity_tol: float = DEFAULT_SINGULARITY_TOL) -> FeasibilityGrid:
    """Compute every atlas cell independently; infeasibility is data."""
    if model is None:
        model = franka_model()
    n = path.n
    a_vals = rg.values()
    b_vals = ag.values()
    joints = np.full((n + 1, rg.m, ag.size, 7), np.nan)
    for i in range(n + 1):
        base = path.poses[i]
        for kk, b in enumerate(b_vals):
            T = adjusted_pose(base, b)
            for jj, a in enumerate(a_vals):
                q = ik_parameterized(model, T, float(a), limits, singularity_tol)
                if q is not None:
                    joints[i, jj, kk] = q
    return FeasibilityGrid(joints=joints, path=path, rgrid=rg, agrid=ag,
                           limits=limits, singularity_tol=singularity_tol)


def export_atlas(grid: FeasibilityGrid, fname) -> None:
    """Write the atlas as CSV rows i,j,k,feasible,q1..q7 (joints blank when infeasible)."""
    o = grid.agrid.o
    with open(fname, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(ATLAS_CSV_HEADER)
        n1, m, ksz = grid.dims
        for i in range(n1):
            for jj in range(m):
                for kk in range(ksz):
                    q = grid.joints[i, jj, kk]
                    if np.isnan(q[0]):
                        w.writerow([i, jj + 1, kk - o, 0] + [""] * 7)
                    else:
                        w.writerow([i, jj + 1, kk - o, 1]
                                   + [repr(float(x)) for x in q])


def import_atlas(fname) -> np.ndarray:
    """Read an atlas CSV back into the joints array (inverse of export_atlas)."""
    rows = []
    with open(fname, newline="") as fh:
        r = csv.reader(fh)
        header = next(r)
        if header != ATLAS_CSV_HEADER:
            raise ValueError(f"unexpected atlas header: {header}")
        rows = list(r)
    i_max = max(int(row[0]) for row in rows)
    j_max = max(int(row[1]) for row in rows)
    k_max = max(int(row[2]) for row in rows)
    joints = np.full((i_max + 1, j_max, 2 * k_max + 1, 7), np.nan)
    for row in rows:
        i, j, k, feas = int(row[0]), int(row[1]), int(row[2]), int(row[3])
        if feas:
            joints[i, j - 1, k + k_max] = [float(x) for x in row[4:11]]
    return joints


def save_grid(grid: FeasibilityGrid, joints_file, meta_file) -> None:
    """Persist the grid as a raw .npy plus a JSON metadata sidecar."""
    np.save(joints_file, grid.joints)
    meta = {
        "schema": 1,
        "provenance": grid.provenance_hash(),
        "t_s": grid.path.t_s,
        "t_0": grid.path.t_0,
        "m": grid.rgrid.m,
        "q7_min": grid.rgrid.q7_min,
        "q7_max": grid.rgrid.q7_max,
        "o": grid.agrid.o,
        "y_max": grid.agrid.y_max,
        "singularity_tol": grid.singularity_tol,
    }
    with open(meta_file, "w") as fh:
        json.dump(meta, fh, indent=1, sort_keys=True)
        fh.write("\n")


def load_grid(joints_file, meta_file, path: PathSpec,
              limits: JointLimits) -> FeasibilityGrid:
    """Load a persisted grid and verify it matches the given path/limits."""
    joints = np.load(joints_file)
    with open(meta_file) as fh:
        meta = json.load(fh)
    if meta.get("schema") != 1:
        raise ValueError("unsupported grid schema")
    grid = FeasibilityGrid(
        joints=joints, path=path,
        rgrid=RedundancyGrid(meta["q7_min"], meta["q7_max"], meta["m"]),
        agrid=AdjustmentGrid(meta["y_max"], meta["o"]),
        limits=limits, singularity_tol=meta["singularity_tol"])
    if grid.provenance_hash() != meta["provenance"]:
        raise ValueError("grid provenance hash does not match inputs")
    return grid
