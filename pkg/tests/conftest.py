"""Shared fixtures: the expensive feasibility grids and planning tables are
built once per session."""

import numpy as np
import pytest

from pathadjust.feasibility import build_grid
from pathadjust.kinematics import franka_limits, franka_model
from pathadjust.pathmodel import (AdjustmentGrid, RedundancyGrid, circle_path,
                                  task_path)
from pathadjust.planner import compute_dp, default_step_constraint


@pytest.fixture(scope="session")
def model():
    return franka_model()


@pytest.fixture(scope="session")
def limits():
    return franka_limits()


@pytest.fixture(scope="session")
def circle_grid(limits):
    """Analysis circle: 101 points over 10 s, m=61, o=10, y_max=0.05."""
    path = circle_path(100, 10.0)
    rg = RedundancyGrid(limits.q_min[6], limits.q_max[6], 61)
    ag = AdjustmentGrid(0.05, 10)
    return build_grid(path, rg, ag, limits)


@pytest.fixture(scope="session")
def circle_table_half(circle_grid, limits):
    """DP table for the circle at planning speed qd_max/2."""
    sc = default_step_constraint(limits, circle_grid.path.t_s, 0.5)
    return compute_dp(circle_grid, sc)


@pytest.fixture(scope="session")
def circle_table_fast(circle_grid, limits):
    """DP table for the circle at planning speed 0.75*qd_max (the envelope
    is nonzero here, so adjustment walks actually adjust)."""
    sc = default_step_constraint(limits, circle_grid.path.t_s, 0.75)
    return compute_dp(circle_grid, sc)


@pytest.fixture(scope="session")
def task_grid(limits):
    """Task circle at z=0.2: fine q7 grid (m=601), y_max=0.025, o=10.

    The fine q7 grid keeps the per-cell quantization of the redundancy
    coordinate well below the tracking tolerance; building it takes about
    a minute.
    """
    path = task_path()
    rg = RedundancyGrid(limits.q_min[6], limits.q_max[6], 601)
    ag = AdjustmentGrid(0.025, 10)
    return build_grid(path, rg, ag, limits)


@pytest.fixture(scope="session")
def task_table(task_grid, limits):
    sc = default_step_constraint(limits, task_grid.path.t_s, 0.75)
    return compute_dp(task_grid, sc)


def random_instance(rng, limits):
    """A tiny synthetic grid instance for oracle comparisons.

    The q7 column of every cell equals its grid value (the invariant the
    planner's branch-window prefilter relies on); the other six joints are
    random.
    """
    n = int(rng.integers(2, 6))
    m = int(rng.integers(2, 5))
    o = int(rng.integers(1, 3))
    rg = RedundancyGrid(-1.0, 1.0, m)
    joints = rng.uniform(-1.0, 1.0, size=(n + 1, m, 2 * o + 1, 7))
    joints[..., 6] = rg.values()[None, :, None]
    drop = rng.random(joints.shape[:3]) < 0.3
    joints[drop] = np.nan
    path = circle_path(n, 0.1 * n)
    from pathadjust.feasibility import FeasibilityGrid
    grid = FeasibilityGrid(joints=joints, path=path, rgrid=rg,
                           agrid=AdjustmentGrid(0.05, o), limits=limits)
    from pathadjust.planner import StepConstraint
    sc = StepConstraint(t_s=path.t_s, qd_plan=rng.uniform(5.0, 15.0, 7),
                        margins=np.zeros(7))
    return grid, sc
