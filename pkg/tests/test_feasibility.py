"""Feasibility atlas: construction, interchange, provenance."""

import json

import numpy as np
import pytest

from pathadjust.feasibility import (FeasibilityGrid, build_grid, export_atlas,
                                    import_atlas, load_grid, save_grid)
from pathadjust.kinematics import ik_parameterized
from pathadjust.pathmodel import (AdjustmentGrid, RedundancyGrid, adjusted_pose,
                                  circle_path)


@pytest.fixture(scope="module")
def small_grid(model, limits):
    path = circle_path(3, 0.3)
    rg = RedundancyGrid(limits.q_min[6], limits.q_max[6], 7)
    ag = AdjustmentGrid(0.05, 1)
    return build_grid(path, rg, ag, limits)


def test_grid_dims_and_present(small_grid):
    assert small_grid.dims == (4, 7, 3)
    present = small_grid.present
    assert present.dtype == bool
    assert present.any() and not present.all()


def test_cells_match_direct_ik(small_grid, model, limits):
    rg, ag = small_grid.rgrid, small_grid.agrid
    for i in (0, 2):
        for j in (1, 4, 7):
            for k in (-1, 0, 1):
                pose = adjusted_pose(small_grid.path.poses[i], ag.value(k))
                want = ik_parameterized(model, pose, rg.value(j), limits,
                                        small_grid.singularity_tol)
                got = small_grid.cell(i, j, k)
                if want is None:
                    assert got is None
                else:
                    assert got is not None and np.array_equal(got, want)
                    assert got[6] == rg.value(j)


def test_infeasible_cells_are_nan_rows(small_grid):
    bad = ~small_grid.present
    assert np.isnan(small_grid.joints[bad]).all()


def test_grid_save_load_round_trip(small_grid, limits, tmp_path):
    jf, mf = tmp_path / "grid.npy", tmp_path / "grid.json"
    save_grid(small_grid, jf, mf)
    back = load_grid(jf, mf, small_grid.path, limits)
    assert np.array_equal(back.joints, small_grid.joints, equal_nan=True)
    assert back.provenance_hash() == small_grid.provenance_hash()


def test_grid_load_rejects_tampered_meta(small_grid, limits, tmp_path):
    jf, mf = tmp_path / "grid.npy", tmp_path / "grid.json"
    save_grid(small_grid, jf, mf)
    meta = json.loads(mf.read_text())
    meta["y_max"] = 0.07
    mf.write_text(json.dumps(meta))
    with pytest.raises(ValueError, match="provenance"):
        load_grid(jf, mf, small_grid.path, limits)


def test_grid_load_rejects_wrong_path(small_grid, limits, tmp_path):
    jf, mf = tmp_path / "grid.npy", tmp_path / "grid.json"
    save_grid(small_grid, jf, mf)
    other = circle_path(3, 0.6)
    with pytest.raises(ValueError, match="provenance"):
        load_grid(jf, mf, other, limits)


def test_atlas_csv_round_trip(small_grid, tmp_path):
    f = tmp_path / "atlas.csv"
    export_atlas(small_grid, f)
    joints = import_atlas(f)
    assert np.array_equal(joints, small_grid.joints, equal_nan=True)


def test_atlas_csv_rejects_bad_header(tmp_path):
    f = tmp_path / "bad.csv"
    f.write_text("x,y\n1,2\n")
    with pytest.raises(ValueError, match="header"):
        import_atlas(f)


def test_provenance_hash_is_type_stable(small_grid):
    """The same parameters must hash identically whether they are numpy
    scalars or plain Python numbers (JSON reload)."""
    g2 = FeasibilityGrid(
        joints=small_grid.joints, path=small_grid.path,
        rgrid=RedundancyGrid(float(small_grid.rgrid.q7_min),
                             float(small_grid.rgrid.q7_max),
                             int(small_grid.rgrid.m)),
        agrid=small_grid.agrid, limits=small_grid.limits,
        singularity_tol=float(small_grid.singularity_tol))
    g3 = FeasibilityGrid(
        joints=small_grid.joints, path=small_grid.path,
        rgrid=RedundancyGrid(np.float64(small_grid.rgrid.q7_min),
                             np.float64(small_grid.rgrid.q7_max),
                             np.int64(small_grid.rgrid.m)),
        agrid=small_grid.agrid, limits=small_grid.limits)
    assert g2.provenance_hash() == g3.provenance_hash()
