"""Command-line interface.

Verbs: ``run-full`` (reference solve, snapshot recording), ``build-rom``
(off-line artifacts from a snapshot file), ``run-rom`` (reduced
integration from stored artifacts), ``bench`` (full sweep with CSV
reports), ``flops`` (operation-count model), ``export-plots`` (CSV or SVG
plot files from a report directory).

Exit codes: 0 success, 2 configuration or input-file problem, 3 numerical
failure (non-convergence or singular systems). Mesh sizes are point counts
(``NXxNY``); times are seconds except the named windows (24h, 3h) and the
``--domain-km`` override, which are converted at the boundary.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
import time
from pathlib import Path

import numpy as np

from swerom.bench import (
    ALL_MODES,
    WINDOWS,
    ExperimentConfig,
    build_state_bases,
    read_run_report,
    run_experiment,
)
from swerom.deim import (
    build_deim_term_operator,
    deim_select_points,
    deim_tensor_coefficients,
    load_deim_operator,
    save_deim_operator,
)
from swerom.errors import FileFormatError, NonConvergenceError
from swerom.flops import flop_count, reference_table
from swerom.metrics import trajectory_errors
from swerom.model import (
    TERM_NAMES,
    VARIABLES,
    build_grid,
    build_operators,
    cfl_indicator,
    coriolis_field,
    initial_state,
)
from swerom.plots import emit_plot_data
from swerom.pod import load_basis, save_basis
from swerom.rom import (
    ReducedModel,
    ReducedSpace,
    build_tensor_coefficients,
    load_tensors,
    project_initial,
    save_tensors,
)
from swerom.snapshots import SnapshotSet, load_snapshots, save_snapshots
from swerom.solver import RecordFlags, SolverConfig, run_full


def _parse_grid(text: str) -> tuple[int, int]:
    try:
        nx, ny = text.lower().split("x")
        return int(nx), int(ny)
    except Exception:
        raise ValueError(f"grid must look like 31x23, got {text!r}")


def _parse_domain_km(text: str) -> tuple[float, float]:
    try:
        L, D = text.lower().split("x")
        return float(L), float(D)
    except Exception:
        raise ValueError(f"domain must look like 6000x4400 (km), got {text!r}")


def _window_args(args) -> tuple[float, int]:
    if args.dt is not None or args.nt is not None:
        if args.dt is None or args.nt is None:
            raise ValueError("custom windows need both --dt and --nt")
        return float(args.dt), int(args.nt)
    return WINDOWS[args.window]


def _solver_config(args, dt: float, nt: int) -> SolverConfig:
    return SolverConfig(dt=dt, nt=nt, newton_tol=args.newton_tol,
                        newton_max_iters=args.newton_max_iters,
                        lu_refresh_every=args.lu_refresh_every,
                        linear_solver=args.linear_solver)


def _add_solver_flags(p):
    p.add_argument("--newton-tol", type=float, default=1e-10)
    p.add_argument("--newton-max-iters", type=int, default=25)
    p.add_argument("--lu-refresh-every", type=int, default=6)
    p.add_argument("--linear-solver", default="direct-sparse",
                   choices=["direct-sparse", "iterative-restarted-residual"])


def _add_window_flags(p):
    p.add_argument("--window", default="3h", choices=sorted(WINDOWS))
    p.add_argument("--dt", type=float, help="custom step [s] (with --nt)")
    p.add_argument("--nt", type=int, help="custom step count (with --dt)")


# --- verbs ---------------------------------------------------------------------

def cmd_flops(args) -> int:
    if args.method is not None:
        count = flop_count(args.method, n=args.n, k=args.k, m=args.m, p=args.p)
        print(count)
        return 0
    writer = csv.writer(sys.stdout)
    writer.writerow(["n", "k", "m", "p", "standard-pod", "pod-deim", "tensorial-pod"])
    for row in reference_table():
        writer.writerow([row["n"], row["k"], row["m"], row["p"],
                         row["standard-pod"], row["pod-deim"], row["tensorial-pod"]])
    return 0


def cmd_run_full(args) -> int:
    nx, ny = _parse_grid(args.grid)
    dt, nt = _window_args(args)
    grid = build_grid(nx, ny)
    ops = build_operators(grid)
    f = coriolis_field(grid)
    ic = initial_state(grid, ops, literal=args.grammeltvedt_literal)
    cfg = _solver_config(args, dt, nt)
    print(f"grid {nx}x{ny} (n={grid.n}), dt={dt:g}s, nt={nt}, "
          f"CFL indicator {cfl_indicator(ic, grid, dt):.4f}")
    t0 = time.perf_counter()
    final, snaps, tm = run_full(ic, cfg, ops, f, grid, RecordFlags())
    elapsed = time.perf_counter() - t0
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    save_snapshots(snaps, out / "snapshots.snap")
    meta = {"nx": nx, "ny": ny, "dt": dt, "nt": nt,
            "newton_tol": cfg.newton_tol, "newton_iters": tm.newton_iters,
            "wall_s": elapsed, "assembly_s": tm.assembly_s,
            "factorization_s": tm.factorization_s, "solve_s": tm.solve_s,
            "recording_s": tm.recording_s}
    (out / "run_meta.json").write_text(json.dumps(meta, indent=2, sort_keys=True))
    print(f"completed {nt} steps to t={final.time:g}s in {elapsed:.3f}s "
          f"({tm.newton_iters} Newton iterations)")
    print(f"wrote {out / 'snapshots.snap'}")
    return 0


def cmd_build_rom(args) -> int:
    snaps = load_snapshots(args.snapshots)
    grid = snaps.grid
    ops = build_operators(grid)
    f = coriolis_field(grid)
    bases = build_state_bases(snaps.states, k=args.k, gamma=args.gamma,
                              center=not args.no_center)
    space = ReducedSpace(bases, ops, f)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for var in VARIABLES:
        save_basis(bases[var], out / f"{var}.pod")
    k_shared = max(b.k for b in bases.values())
    homogeneous = len({b.k for b in bases.values()}) == 1
    if homogeneous:
        save_tensors(build_tensor_coefficients(space), out / "tensors.tpod")
    if args.mode == "pod-deim":
        if snaps.nonlinear is None:
            raise ValueError("snapshot file has no nonlinear-term matrices; "
                             "re-run run-full with recording enabled")
        if args.m is None:
            raise ValueError("pod-deim needs --m")
        for term in TERM_NAMES:
            V, s, _ = np.linalg.svd(snaps.nonlinear[term], full_matrices=False)
            op = build_deim_term_operator(space, term, V[:, :args.m],
                                          deim_select_points(V[:, :args.m]), sigma=s)
            save_deim_operator(op, out / f"{term}.deim")
    meta = {"nx": grid.nx, "ny": grid.ny, "dt": snaps.dt, "nt": snaps.nt,
            "k": k_shared, "m": args.m, "center": not args.no_center,
            "mode": args.mode}
    (out / "rom_meta.json").write_text(json.dumps(meta, indent=2, sort_keys=True))
    print(f"wrote reduced artifacts (k={k_shared}) to {out}")
    return 0


def cmd_run_rom(args) -> int:
    romdir = Path(args.rom)
    meta = json.loads((romdir / "rom_meta.json").read_text())
    grid = build_grid(meta["nx"], meta["ny"])
    ops = build_operators(grid)
    f = coriolis_field(grid)
    bases = {var: load_basis(romdir / f"{var}.pod") for var in VARIABLES}
    space = ReducedSpace(bases, ops, f)
    mode = args.mode
    deim_ops = None
    if mode == "pod-deim":
        deim_ops = {term: load_deim_operator(romdir / f"{term}.deim")
                    for term in TERM_NAMES}
        tensors = deim_tensor_coefficients(deim_ops, space)
    else:
        tensors_path = romdir / "tensors.tpod"
        tensors = (load_tensors(tensors_path) if tensors_path.exists()
                   else build_tensor_coefficients(space))
    nt = args.nt if args.nt is not None else int(meta["nt"])
    cfg = _solver_config(args, float(meta["dt"]), nt)
    ic = initial_state(grid, ops)
    model = ReducedModel(space, tensors, mode, cfg, deim_ops=deim_ops)
    x0 = project_initial(ic, space)
    t0 = time.perf_counter()
    _, traj, tm = model.run(x0, nt)
    elapsed = time.perf_counter() - t0
    lifted = {var: bases[var].xbar[:, None] + bases[var].U @ traj[var]
              for var in VARIABLES}
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    times = float(meta["dt"]) * np.arange(1, nt + 1)
    save_snapshots(SnapshotSet(grid=grid, dt=float(meta["dt"]), times=times,
                               states=lifted), out / "rom_trajectory.snap")
    print(f"{mode}: {nt} steps in {elapsed:.3f}s "
          f"(nonlinear phase {tm.nonlinear_s:.3f}s, {tm.newton_iters} Newton iterations)")
    if args.snapshots:
        full = load_snapshots(args.snapshots)
        errors = trajectory_errors(full.states, lifted)
        with open(out / "metrics.csv", "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["variable", "relative_error", "rmse_final"])
            for var in VARIABLES:
                writer.writerow([var, repr(errors[var]["relerr"]),
                                 repr(errors[var]["rmse"])])
        for var in VARIABLES:
            print(f"  {var}: relative error {errors[var]['relerr']:.3e}, "
                  f"final RMSE {errors[var]['rmse']:.3e}")
    print(f"wrote {out / 'rom_trajectory.snap'}")
    return 0


def cmd_bench(args) -> int:
    if args.config:
        cfg = ExperimentConfig.from_json(args.config)
    else:
        cfg = ExperimentConfig()
    if args.grid:
        cfg.grids = [_parse_grid(g) for g in args.grid]
    if args.window:
        cfg.window = args.window
    if args.dt is not None:
        cfg.dt, cfg.window = args.dt, "custom"
    if args.nt is not None:
        cfg.nt = args.nt
    if args.k is not None:
        cfg.k, cfg.gamma = args.k, None
    if args.gamma is not None:
        cfg.gamma, cfg.k = args.gamma, None
    if args.m:
        cfg.m_values = args.m
    if args.mode:
        cfg.modes = args.mode
    if args.out:
        cfg.out_dir = args.out
    if args.seed is not None:
        cfg.seed = args.seed
    if args.timed_serial is not None:
        cfg.timed_serial = args.timed_serial
    if args.workers is not None:
        cfg.workers = args.workers
    if args.domain_km:
        cfg.domain_km = _parse_domain_km(args.domain_km)

    reports, extras = run_experiment(cfg)
    for rep in reports:
        if rep.mode == "full":
            print(f"{rep.grid} full: {rep.snapshots_s:.3f}s")
        elif rep.status != "ok":
            print(f"{rep.grid} {rep.mode}" + (f" m={rep.m}" if rep.m else "")
                  + f": {rep.status}")
        else:
            tag = f" m={rep.m}" if rep.m else ""
            print(f"{rep.grid} {rep.mode}{tag}: k={rep.k} "
                  f"offline {rep.offline_total_s:.3f}s online {rep.online_s:.3f}s "
                  f"relerr(u,v,phi)=({rep.relerr_u:.2e},{rep.relerr_v:.2e},"
                  f"{rep.relerr_phi:.2e})")
    print(f"wrote CSV reports to {cfg.out_dir}")
    return 0


def cmd_export_plots(args) -> int:
    reports_dir = Path(args.reports)
    report_path = reports_dir / "run_report.csv"
    if not report_path.exists():
        raise FileNotFoundError(f"no run_report.csv in {reports_dir}")
    reports = read_run_report(report_path)
    spectra = None
    spectra_path = reports_dir / "spectra.csv"
    if spectra_path.exists():
        with open(spectra_path, newline="") as fh:
            spectra = [{"grid": r["grid"], "window": r["window"], "kind": r["kind"],
                        "name": r["name"], "index": int(r["index"]),
                        "sigma": float(r["sigma"]), "lambda": float(r["lambda"])}
                       for r in csv.DictReader(fh)]
    written = emit_plot_data(reports, args.out or reports_dir, fmt=args.format,
                             spectra=spectra)
    for path in written:
        print(f"wrote {path}")
    return 0


# --- parser ----------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="swerom",
        description="Reduced-order modeling benchmarks for the 2D shallow "
                    "water equations")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("flops", help="operation-count model (no args: full table)")
    p.add_argument("--method", choices=["standard-pod", "pod-deim", "tensorial-pod"])
    p.add_argument("--n", type=int)
    p.add_argument("--k", type=int)
    p.add_argument("--m", type=int)
    p.add_argument("--p", type=int, default=2)
    p.set_defaults(func=cmd_flops)

    p = sub.add_parser("run-full", help="integrate the full model, record snapshots")
    p.add_argument("--grid", default="31x23")
    _add_window_flags(p)
    _add_solver_flags(p)
    p.add_argument("--grammeltvedt-literal", action="store_true",
                   help="audit switch: reproduce the degenerate printed form "
                        "of the initial height")
    p.add_argument("--out", default="full_out")
    p.set_defaults(func=cmd_run_full)

    p = sub.add_parser("build-rom", help="build reduced artifacts from snapshots")
    p.add_argument("--snapshots", required=True)
    p.add_argument("--k", type=int)
    p.add_argument("--gamma", type=float)
    p.add_argument("--m", type=int)
    p.add_argument("--mode", default="tensorial-pod",
                   choices=["standard-pod", "tensorial-pod", "pod-deim"])
    p.add_argument("--no-center", action="store_true")
    p.add_argument("--out", default="rom_out")
    p.set_defaults(func=cmd_build_rom)

    p = sub.add_parser("run-rom", help="integrate a reduced model from artifacts")
    p.add_argument("--rom", required=True, help="directory from build-rom")
    p.add_argument("--mode", default="tensorial-pod",
                   choices=["standard-pod", "tensorial-pod", "pod-deim"])
    p.add_argument("--nt", type=int)
    p.add_argument("--snapshots", help="full snapshots for error metrics")
    _add_solver_flags(p)
    p.add_argument("--out", default="romrun_out")
    p.set_defaults(func=cmd_run_rom)

    p = sub.add_parser("bench", help="full sweep with CSV reports")
    p.add_argument("--config", help="JSON experiment config")
    p.add_argument("--grid", action="append",
                   help="NXxNY; repeat for sweeps")
    p.add_argument("--window", choices=sorted(WINDOWS))
    p.add_argument("--dt", type=float)
    p.add_argument("--nt", type=int)
    p.add_argument("--k", type=int)
    p.add_argument("--gamma", type=float)
    p.add_argument("--m", action="append", type=int)
    p.add_argument("--mode", action="append", choices=list(ALL_MODES))
    p.add_argument("--out")
    p.add_argument("--seed", type=int)
    p.add_argument("--timed-serial", action=argparse.BooleanOptionalAction,
                   default=None)
    p.add_argument("--workers", type=int)
    p.add_argument("--domain-km", help="LxD in kilometers, e.g. 6000x4400")
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("export-plots", help="plot files from a bench directory")
    p.add_argument("--reports", required=True)
    p.add_argument("--format", default="csv", choices=["csv", "svg-line"])
    p.add_argument("--out")
    p.set_defaults(func=cmd_export_plots)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, KeyError, FileFormatError, FileNotFoundError,
            json.JSONDecodeError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 2
    except (NonConvergenceError, np.linalg.LinAlgError) as err:
        print(f"numerical failure: {err}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
