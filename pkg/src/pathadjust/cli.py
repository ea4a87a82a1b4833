"""Command-line front end.

Subcommands mirror the pipeline stages: `grid` (feasibility atlas only),
`plan` (atlas + planning table), `simulate` (planned artifacts + live
adjustment stream), `baseline` (greedy online resolver for comparison),
and `verify` (artifact integrity audit).

Exit codes: 0 success, 2 infeasible path, 3 signal violation, 4 artifact
mismatch.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys

import numpy as np

from .feasibility import build_grid, save_grid
from .harness import (ArtifactError, EXIT_ARTIFACT, EXIT_INFEASIBLE, EXIT_OK,
                      EXIT_SIGNAL, ScenarioConfig, SignalError,
                      adjustment_signal, baseline_online, load_config,
                      load_plan, run_plan, save_config, save_trajectory_csv,
                      simulate, validate_trajectory)
from .kinematics import franka_limits
from .pathmodel import AdjustmentGrid, RedundancyGrid
from .planner import AdjustStepError, InfeasibleStartError, verify_table


def _add_config_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON scenario config; flags override it")
    p.add_argument("--out", required=True, help="artifact directory")
    p.add_argument("--path", choices=["circle", "task", "csv"], dest="path_kind")
    p.add_argument("--path-file", dest="path_file")
    p.add_argument("--n", type=int, dest="path_n")
    p.add_argument("--duration", type=float, dest="path_duration")
    p.add_argument("--m", type=int, dest="m")
    p.add_argument("--o", type=int, dest="o")
    p.add_argument("--y-max", type=float, dest="y_max")
    p.add_argument("--t0", type=float, dest="t_0")
    p.add_argument("--qd-plan-fraction", type=float, dest="qd_plan_fraction")
    p.add_argument("--singularity-tol", type=float, dest="singularity_tol")
    p.add_argument("--signal", choices=["zero", "scripted", "walk"],
                   dest="signal_kind")
    p.add_argument("--signal-file", dest="signal_file")
    p.add_argument("--seed", type=int, dest="seed")
    p.add_argument("--step-bound", type=int, dest="step_bound")


def _config_from_args(args: argparse.Namespace) -> ScenarioConfig:
    if args.config:
        cfg = load_config(args.config)
        fields = {name: getattr(cfg, name) for name in cfg.__dataclass_fields__}
    else:
        fields = {}
    for name in ("path_kind", "path_file", "path_n", "path_duration", "m",
                 "o", "y_max", "t_0", "qd_plan_fraction", "singularity_tol",
                 "signal_kind", "signal_file", "seed", "step_bound"):
        v = getattr(args, name, None)
        if v is not None:
            fields[name] = v
    return ScenarioConfig(**fields)


def _cmd_grid(args) -> int:
    cfg = _config_from_args(args)
    limits = franka_limits()
    path = cfg.build_path()
    rg = RedundancyGrid(limits.q_min[6], limits.q_max[6], cfg.m)
    ag = AdjustmentGrid(cfg.y_max, cfg.o)
    grid = build_grid(path, rg, ag, singularity_tol=cfg.singularity_tol,
                      limits=limits)
    os.makedirs(args.out, exist_ok=True)
    save_grid(grid, os.path.join(args.out, "grid.npy"),
              os.path.join(args.out, "grid.json"))
    save_config(cfg, os.path.join(args.out, "config.json"))
    feasible = int(grid.present.sum())
    print(f"grid {grid.dims}: {feasible} feasible cells")
    return EXIT_OK


def _cmd_plan(args) -> int:
    cfg = _config_from_args(args)
    try:
        run_plan(cfg, args.out)
    except InfeasibleStartError:
        print("no feasible start", file=sys.stderr)
        return EXIT_INFEASIBLE
    save_config(cfg, os.path.join(args.out, "config.json"))
    return EXIT_OK


def _cmd_simulate(args) -> int:
    cfg = _config_from_args(args)
    limits = franka_limits()
    try:
        grid, table = load_plan(cfg, args.out, limits)
    except (ArtifactError, FileNotFoundError, ValueError) as exc:
        print(f"artifact mismatch: {exc}", file=sys.stderr)
        return EXIT_ARTIFACT
    try:
        signal = adjustment_signal(cfg, table.d_max, cfg.o, grid.path.n)
        log = simulate(cfg, grid, table, signal, limits)
    except (SignalError, AdjustStepError) as exc:
        print(f"signal violation: {exc}", file=sys.stderr)
        return EXIT_SIGNAL
    report = validate_trajectory(log, limits)
    save_trajectory_csv(log, os.path.join(args.out, "trajectory.csv"))
    report.save_csv(os.path.join(args.out, "audit.csv"))
    with open(os.path.join(args.out, "report.json"), "w") as fh:
        json.dump(report.to_dict(), fh, indent=1, sort_keys=True)
        fh.write("\n")
    print(f"{len(log.cycle)} cycles, violations {report.violations}, "
          f"max tracking error {report.err_m.max():.5f} m")
    if report.violations or not report.completed:
        return EXIT_SIGNAL
    return EXIT_OK


def _cmd_baseline(args) -> int:
    cfg = _config_from_args(args)
    limits = franka_limits()
    try:
        grid, table = load_plan(cfg, args.out, limits)
    except (ArtifactError, FileNotFoundError, ValueError) as exc:
        print(f"artifact mismatch: {exc}", file=sys.stderr)
        return EXIT_ARTIFACT
    q0 = grid.cell(0, table.j0, 0)
    res = baseline_online(grid.path, q0, limits,
                          singularity_tol=cfg.singularity_tol)
    doc = {"schema": 1, "halted": res.halted, "halt_index": res.halt_index,
           "limiting_joint": res.limiting_joint}
    with open(os.path.join(args.out, "baseline.json"), "w") as fh:
        json.dump(doc, fh, indent=1, sort_keys=True)
        fh.write("\n")
    with open(os.path.join(args.out, "baseline.csv"), "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["i"] + [f"q{c}" for c in range(1, 8)])
        for i, q in enumerate(res.qs):
            w.writerow([i] + [repr(float(x)) for x in q])
    if res.halted:
        print(f"baseline halted at sampling point {res.halt_index} "
              f"(limiting joint {res.limiting_joint})")
    else:
        print("baseline completed the path")
    return EXIT_OK


def _cmd_verify(args) -> int:
    cfg = _config_from_args(args)
    limits = franka_limits()
    try:
        grid, table = load_plan(cfg, args.out, limits)
    except (ArtifactError, FileNotFoundError, ValueError) as exc:
        print(f"artifact mismatch: {exc}", file=sys.stderr)
        return EXIT_ARTIFACT
    issues = verify_table(table, grid, table.sc)
    if issues:
        for line in issues[:20]:
            print(line, file=sys.stderr)
        print(f"{len(issues)} issue(s)", file=sys.stderr)
        return EXIT_ARTIFACT
    print("artifacts verified")
    return EXIT_OK


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="pathadjust",
        description="Offline redundancy planning and simulated execution "
                    "for adjustable Cartesian paths")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, fn in (("grid", _cmd_grid), ("plan", _cmd_plan),
                     ("simulate", _cmd_simulate), ("baseline", _cmd_baseline),
                     ("verify", _cmd_verify)):
        p = sub.add_parser(name)
        _add_config_args(p)
        p.set_defaults(func=fn)
    args = parser.parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
