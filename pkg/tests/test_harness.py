"""Scenario harness: config, artifacts, signals, simulation, baseline, CLI."""

import json
import os

import numpy as np
import pytest

from pathadjust.cli import main
from pathadjust.harness import (ArtifactError, EXIT_ARTIFACT, EXIT_INFEASIBLE,
                                EXIT_OK, EXIT_SIGNAL, AUDIT_CSV_HEADER,
                                ScenarioConfig, SignalError,
                                TRAJECTORY_CSV_HEADER, adjustment_signal,
                                baseline_online, envelope_walk, load_config,
                                load_plan, run_plan, save_config,
                                save_trajectory_csv, simulate,
                                validate_trajectory)
from pathadjust.kinematics import ik_parameterized
from pathadjust.pathmodel import PathSpec, circle_path
from pathadjust.planner import InfeasibleStartError

# small but feasible: 11 sampling points, coarse grids, plans in < 1 s
SMALL = dict(path_kind="circle", path_n=10, path_duration=5.0,
             m=21, o=2, y_max=0.05)
# same path compressed to 2 s: the q7 sweep outruns the step limit
SMALL_INFEASIBLE = dict(path_kind="circle", path_n=10, path_duration=2.0,
                        m=21, o=2, y_max=0.05)


@pytest.fixture(scope="module")
def small_plan(tmp_path_factory, limits):
    out = tmp_path_factory.mktemp("plan")
    cfg = ScenarioConfig(**SMALL)
    grid, table = run_plan(cfg, out, limits, quiet=True)
    save_config(cfg, out / "config.json")
    return cfg, out, grid, table


def test_config_round_trip(tmp_path):
    cfg = ScenarioConfig(**SMALL, signal_kind="walk", seed=3, step_bound=1,
                         margins=(0.1,) * 7)
    f = tmp_path / "cfg.json"
    save_config(cfg, f)
    assert load_config(f) == cfg


def test_config_validation():
    with pytest.raises(ValueError):
        ScenarioConfig(path_kind="spiral")
    with pytest.raises(ValueError):
        ScenarioConfig(path_kind="csv")          # needs path_file
    with pytest.raises(ValueError):
        ScenarioConfig(signal_kind="scripted")   # needs signal_file
    with pytest.raises(ValueError):
        ScenarioConfig(qd_plan_fraction=0.0)


def test_plan_hash_ignores_signal_fields():
    a = ScenarioConfig(**SMALL)
    b = ScenarioConfig(**SMALL, signal_kind="walk", seed=99, step_bound=1)
    c = ScenarioConfig(**{**SMALL, "y_max": 0.04})
    assert a.plan_hash() == b.plan_hash()
    assert a.plan_hash() != c.plan_hash()


def test_zero_signal():
    cfg = ScenarioConfig(**SMALL)
    sig = adjustment_signal(cfg, 2, 2, 10)
    assert sig.tolist() == [0] * 11


def test_walk_signal_bounded_and_deterministic():
    cfg = ScenarioConfig(**SMALL, signal_kind="walk", seed=5)
    o, d_max, n = 2, 2, 200
    sig = adjustment_signal(cfg, d_max, o, n)
    assert len(sig) == n + 1 and sig[0] == 0
    assert np.abs(sig).max() <= o
    assert np.abs(np.diff(sig)).max() <= d_max
    assert sig.max() == o and sig.min() == -o  # reflection keeps it inside
    again = adjustment_signal(cfg, d_max, o, n)
    assert np.array_equal(sig, again)
    other = adjustment_signal(
        ScenarioConfig(**SMALL, signal_kind="walk", seed=6), d_max, o, n)
    assert not np.array_equal(sig, other)


def test_walk_signal_honors_step_bound():
    cfg = ScenarioConfig(**SMALL, signal_kind="walk", seed=5, step_bound=1)
    sig = adjustment_signal(cfg, 2, 2, 200)
    assert np.abs(np.diff(sig)).max() <= 1


def _scripted(tmp_path, rows):
    f = tmp_path / "sig.csv"
    f.write_text("c\n" + "".join(f"{r}\n" for r in rows))
    return ScenarioConfig(**SMALL, signal_kind="scripted",
                          signal_file=str(f))


def test_scripted_signal_accepted(tmp_path):
    cfg = _scripted(tmp_path, [0, 1, 2, 1, 0, -1, -2, -1, 0, 1, 0])
    sig = adjustment_signal(cfg, 2, 2, 10)
    assert sig.tolist() == [0, 1, 2, 1, 0, -1, -2, -1, 0, 1, 0]


def test_scripted_signal_rejections(tmp_path):
    with pytest.raises(SignalError, match="header"):
        f = tmp_path / "bad.csv"
        f.write_text("x\n0\n")
        adjustment_signal(ScenarioConfig(**SMALL, signal_kind="scripted",
                                         signal_file=str(f)), 2, 2, 10)
    with pytest.raises(SignalError, match="length"):
        adjustment_signal(_scripted(tmp_path, [0, 1]), 2, 2, 10)
    with pytest.raises(SignalError, match="index 0"):
        adjustment_signal(_scripted(tmp_path, [1] + [0] * 10), 2, 2, 10)
    # first offending index is named
    with pytest.raises(SignalError, match="index 3"):
        adjustment_signal(_scripted(tmp_path, [0, -1, -2, 1, 0, 0, 0, 0, 0, 0, 0]),
                          2, 2, 10)


def test_envelope_walk_is_admissible(small_plan):
    cfg, out, grid, table = small_plan
    o = table.o
    for seed in range(5):
        c = envelope_walk(grid, table, seed)
        assert c[0] == 0 and np.abs(c).max() <= o
        j, k = table.j0, 0
        for i in range(grid.path.n):
            d = int(table.L[i, j - 1, k + o])
            assert abs(int(c[i + 1]) - k) <= d
            from pathadjust.planner import next_joints
            j, _ = next_joints(table, grid, i, j, k, int(c[i + 1]))
            k = int(c[i + 1])


def test_run_plan_artifacts_and_load(small_plan, limits):
    cfg, out, grid, table = small_plan
    for f in ("grid.npy", "grid.json", "table.json", "summary.json"):
        assert (out / f).exists()
    g2, t2 = load_plan(cfg, out, limits)
    assert g2.provenance_hash() == grid.provenance_hash()
    assert np.array_equal(t2.L, table.L)
    with open(out / "summary.json") as fh:
        summary = json.load(fh)
    assert summary["d_max"] == table.d_max
    assert "time" not in json.dumps(summary).lower()


def test_load_plan_rejects_changed_config(small_plan, limits):
    cfg, out, grid, table = small_plan
    other = ScenarioConfig(**{**SMALL, "y_max": 0.04})
    with pytest.raises(ArtifactError):
        load_plan(other, out, limits)


def test_simulate_rejects_foreign_table(small_plan, limits):
    cfg, out, grid, table = small_plan
    import dataclasses
    bad = dataclasses.replace(table, grid_hash="0" * 64)
    with pytest.raises(ArtifactError):
        simulate(cfg, grid, bad, np.zeros(grid.path.n + 1, dtype=int), limits)


def test_simulate_rejects_bad_signal(small_plan, limits):
    cfg, out, grid, table = small_plan
    with pytest.raises(SignalError, match="length"):
        simulate(cfg, grid, table, np.zeros(3, dtype=int), limits)
    bad = np.zeros(grid.path.n + 1, dtype=int)
    bad[0] = 1
    with pytest.raises(SignalError, match="c_0"):
        simulate(cfg, grid, table, bad, limits)


def test_simulate_deterministic_and_clean(small_plan, limits):
    cfg, out, grid, table = small_plan
    sig = envelope_walk(grid, table, seed=1)
    log1 = simulate(cfg, grid, table, sig, limits)
    log2 = simulate(cfg, grid, table, sig, limits)
    assert np.array_equal(log1.q, log2.q)
    assert np.array_equal(log1.qddd, log2.qddd)
    assert log1.completed
    report = validate_trajectory(log1, limits)
    assert report.violations == 0
    assert report.completed


def test_validate_trajectory_flags_injected_violation(small_plan, limits):
    cfg, out, grid, table = small_plan
    sig = np.zeros(grid.path.n + 1, dtype=int)
    log = simulate(cfg, grid, table, sig, limits)
    log.q = log.q.copy()
    log.q[100, 0] += 1.0  # a 1 rad jump in one cycle breaks every bound
    report = validate_trajectory(log, limits)
    assert report.violations > 0


def test_trajectory_csv_schema(small_plan, limits, tmp_path):
    cfg, out, grid, table = small_plan
    sig = np.zeros(grid.path.n + 1, dtype=int)
    log = simulate(cfg, grid, table, sig, limits)
    f = tmp_path / "traj.csv"
    save_trajectory_csv(log, f)
    lines = f.read_text().splitlines()
    assert lines[0].split(",") == TRAJECTORY_CSV_HEADER
    assert len(lines) == 1 + len(log.cycle)
    report = validate_trajectory(log, limits)
    fa = tmp_path / "audit.csv"
    report.save_csv(fa)
    audit_lines = fa.read_text().splitlines()
    assert audit_lines[0].split(",") == AUDIT_CSV_HEADER
    assert len(audit_lines) == 1 + grid.path.n + 1


def test_baseline_halts_on_full_circle(model, limits):
    path = circle_path(100, 10.0)
    q0 = ik_parameterized(model, path.poses[0], 2.6, limits)
    res = baseline_online(path, q0, limits, model)
    assert res.halted
    assert res.halt_index < path.n
    assert res.limiting_joint == 7


def test_baseline_completes_short_path(model, limits):
    full = circle_path(100, 10.0)
    sub = PathSpec(poses=full.poses[:4], t_s=full.t_s, t_0=full.t_0)
    q0 = ik_parameterized(model, sub.poses[0], 2.6, limits)
    res = baseline_online(sub, q0, limits, model)
    assert not res.halted
    assert len(res.qs) == 4


def _flags(d, out):
    return ["--out", str(out), "--path", d["path_kind"],
            "--n", str(d["path_n"]), "--duration", str(d["path_duration"]),
            "--m", str(d["m"]), "--o", str(d["o"]),
            "--y-max", str(d["y_max"])]


def test_cli_plan_and_simulate_ok(tmp_path):
    out = tmp_path / "run"
    assert main(["plan"] + _flags(SMALL, out)) == EXIT_OK
    assert main(["simulate"] + _flags(SMALL, out)) == EXIT_OK
    assert main(["verify"] + _flags(SMALL, out)) == EXIT_OK
    assert main(["baseline"] + _flags(SMALL, out)) == EXIT_OK
    for f in ("trajectory.csv", "audit.csv", "report.json", "baseline.json"):
        assert (out / f).exists()
    with open(out / "report.json") as fh:
        report = json.load(fh)
    assert report["violations"] == 0 and report["completed"]


def test_cli_plan_infeasible_exit_code(tmp_path):
    out = tmp_path / "run"
    assert main(["plan"] + _flags(SMALL_INFEASIBLE, out)) == EXIT_INFEASIBLE


def test_cli_simulate_signal_violation_exit_code(tmp_path):
    out = tmp_path / "run"
    assert main(["plan"] + _flags(SMALL, out)) == EXIT_OK
    sig = tmp_path / "sig.csv"
    # d_max for this plan is 2; a jump of 4 violates the envelope
    sig.write_text("c\n0\n-2\n2\n0\n0\n0\n0\n0\n0\n0\n0\n")
    rc = main(["simulate"] + _flags(SMALL, out)
              + ["--signal", "scripted", "--signal-file", str(sig)])
    assert rc == EXIT_SIGNAL


def test_cli_simulate_artifact_mismatch_exit_code(tmp_path):
    out = tmp_path / "run"
    assert main(["simulate"] + _flags(SMALL, out)) == EXIT_ARTIFACT  # nothing planned
    assert main(["plan"] + _flags(SMALL, out)) == EXIT_OK
    changed = dict(SMALL, y_max=0.04)
    assert main(["simulate"] + _flags(changed, out)) == EXIT_ARTIFACT


def test_cli_config_file_with_flag_override(tmp_path):
    out = tmp_path / "run"
    cfgf = tmp_path / "cfg.json"
    save_config(ScenarioConfig(**SMALL_INFEASIBLE), cfgf)
    # the flag overrides the infeasible duration from the file
    rc = main(["plan", "--config", str(cfgf), "--out", str(out),
               "--duration", "5.0"])
    assert rc == EXIT_OK
