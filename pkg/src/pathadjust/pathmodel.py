"""Path, sampling and discretization data model.

Holds the prescribed Cartesian path (sampling points), the axis-adjustment
grid, the q7 grid, the two built-in test-path generators, and the CSV
interchange format for user-supplied paths.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from .kinematics import Pose

DEFAULT_M = 61
DEFAULT_O = 10
DEFAULT_T0 = 0.001

PATH_CSV_HEADER = ["i", "r11", "r12", "r13", "r21", "r22", "r23",
                   "r31", "r32", "r33", "px", "py", "pz", "t"]


@dataclass(frozen=True)
class PathSpec:
    """Ordered Cartesian sampling points plus the timing that binds them.

    The sampling interval t_s must be an exact integer multiple of the
    communication period t_0.
    """

    poses: tuple[Pose, ...]
    t_s: float
    t_0: float = DEFAULT_T0

    def __post_init__(self):
        if len(self.poses) < 2:
            raise ValueError("a path needs at least 2 sampling points")
        if self.t_s <= 0 or self.t_0 <= 0:
            raise ValueError("t_s and t_0 must be positive")
        ratio = self.t_s / self.t_0
        if abs(ratio - round(ratio)) > 1e-9:
            raise ValueError("t_s must be an integer multiple of t_0")

    @property
    def n(self) -> int:
        """Index of the last sampling point (points are 0..n)."""
        return len(self.poses) - 1

    @property
    def n_cycles(self) -> int:
        """Communication cycles between adjacent sampling points."""
        return round(self.t_s / self.t_0)


@dataclass(frozen=True)
class AdjustmentGrid:
    """Symmetric uniform grid b_k = k * y_max / o for k = -o..o (meters)."""

    y_max: float
    o: int

    def __post_init__(self):
        if self.y_max <= 0:
            raise ValueError("y_max must be positive")
        if self.o < 1:
            raise ValueError("o must be a positive integer")

    @property
    def size(self) -> int:
        return 2 * self.o + 1

    def value(self, k: int) -> float:
        if abs(k) > self.o:
            raise ValueError(f"adjustment index {k} outside [-{self.o}, {self.o}]")
        return k * self.y_max / self.o

    def values(self) -> np.ndarray:
        return np.arange(-self.o, self.o + 1) * (self.y_max / self.o)

    def index(self, b: float) -> int:
        k = round(b * self.o / self.y_max)
        if abs(k) > self.o or abs(self.value(k) - b) > 1e-12:
            raise ValueError(f"{b} is not a grid value")
        return k


@dataclass(frozen=True)
class RedundancyGrid:
    """Uniform q7 grid a_j, j = 1..m, spanning [q7_min, q7_max]."""

    q7_min: float
    q7_max: float
    m: int

    def __post_init__(self):
        if self.m < 2:
            raise ValueError("m must be >= 2")
        if not self.q7_min < self.q7_max:
            raise ValueError("q7_min must be < q7_max")

    def value(self, j: int) -> float:
        if not 1 <= j <= self.m:
            raise ValueError(f"branch index {j} outside [1, {self.m}]")
        return self.q7_min + (j - 1) * (self.q7_max - self.q7_min) / (self.m - 1)

    def values(self) -> np.ndarray:
        return np.linspace(self.q7_min, self.q7_max, self.m)


def adjusted_pose(T: Pose, y: float) -> Pose:
    """Displace the pose translation by y along its own z-axis.

    Rotation is unchanged; the z-axis is the third column of R (the probe
    direction).
    """
    return Pose(R=T.R, p=T.p + y * T.R[:, 2])


def circle_path(n: int, duration: float, t_0: float = DEFAULT_T0) -> PathSpec:
    """Closed circular test path at height 0.1 m, n+1 sampling points.

    theta(t) sweeps -pi..pi over the duration; the end pose equals the
    start pose.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    if duration <= 0:
        raise ValueError("duration must be positive")
    poses = []
    for i in range(n + 1):
        theta = 2.0 * math.pi * i / n - math.pi
        c, s = math.cos(theta), math.sin(theta)
        R = np.array([[c, s, 0.0], [s, -c, 0.0], [0.0, 0.0, -1.0]])
        p = np.array([0.6 + 0.1 * c, 0.1 * s, 0.1])
        poses.append(Pose(R=R, p=p))
    return PathSpec(poses=tuple(poses), t_s=duration / n, t_0=t_0)


def task_path(t_0: float = DEFAULT_T0) -> PathSpec:
    """Closed circular task path: 101 sampling points at height 0.2 m, t_s = 0.1 s.

    Uses the same angular convention as circle_path (theta sweeps -pi..pi),
    starting at the point nearest the base.  Starting at the far point
    instead makes the whole path infeasible: the reachable q7 band is tied
    to the absolute position on the circle and must sweep monotonically
    from its maximum to its minimum, which only works from this phase.
    """
    poses = []
    for i in range(101):
        a = 2.0 * math.pi * i / 100.0 - math.pi
        c, s = math.cos(a), math.sin(a)
        R = np.array([[c, s, 0.0], [s, -c, 0.0], [0.0, 0.0, -1.0]])
        p = np.array([0.6 + 0.1 * c, 0.1 * s, 0.2])
        poses.append(Pose(R=R, p=p))
    return PathSpec(poses=tuple(poses), t_s=0.1, t_0=t_0)


def joint_velocity(q_i: np.ndarray, q_prev: np.ndarray, t_s: float) -> np.ndarray:
    """Finite-difference joint velocity between adjacent sampling points."""
    if t_s <= 0:
        raise ValueError("t_s must be positive")
    return (np.asarray(q_i, dtype=float) - np.asarray(q_prev, dtype=float)) / t_s


def save_path_csv(path: PathSpec, fname) -> None:
    """Write the path in the interchange CSV schema (row-major R then p)."""
    with open(fname, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(PATH_CSV_HEADER)
        for i, pose in enumerate(path.poses):
            row = [i] + [repr(float(x)) for x in pose.R.reshape(-1)]
            row += [repr(float(x)) for x in pose.p]
            row.append(repr(float(i * path.t_s)))
            w.writerow(row)


def load_path_csv(fname, t_0: float = DEFAULT_T0) -> PathSpec:
    """Read a path from the interchange CSV schema."""
    poses = []
    times = []
    with open(fname, newline="") as fh:
        r = csv.reader(fh)
        header = next(r)
        if header != PATH_CSV_HEADER:
            raise ValueError(f"unexpected path CSV header: {header}")
        expect = 0
        for row in r:
            if int(row[0]) != expect:
                raise ValueError(f"row index {row[0]} out of order (expected {expect})")
            expect += 1
            vals = [float(x) for x in row[1:]]
            R = np.array(vals[:9]).reshape(3, 3)
            p = np.array(vals[9:12])
            pose = Pose(R=R, p=p)
            pose.validate(tol=1e-6)
            poses.append(pose)
            times.append(vals[12])
    if len(poses) < 2:
        raise ValueError("path CSV has fewer than 2 rows")
    steps = np.diff(times)
    if np.abs(steps - steps[0]).max() > 1e-9:
        raise ValueError("path CSV timestamps are not uniformly spaced")
    return PathSpec(poses=tuple(poses), t_s=float(steps[0]), t_0=t_0)
