"""Command-line entry point.

Subcommands: ``run``, ``check-envar``, ``converge``, ``project``, ``describe``.
Exit codes: 0 success, 2 configuration or input error, 3 vacuum breakdown,
4 stability failure, 5 audit failure.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from .convergence import LevelBreakdown, RefinementStudy, run_study, study_report
from .diagnostics import EnergyLedger, drift, min_energy_decrease
from .envar import catalog, evaluate_catalog, with_energy_perturbed, write_report
from .initial_data import InitialDataError, project, reference_energy
from .io import (
    ConfigError,
    dump_csv,
    load_config,
    output_dir,
    parse_config,
    read_snapshot,
    thread_count,
    write_snapshot,
)
from .state import VacuumBreakdown, discrete_energy
from .timeint import StabilityFailure, Trajectory, integrate_to

EXIT_OK, EXIT_CONFIG, EXIT_VACUUM, EXIT_STABILITY, EXIT_AUDIT = 0, 2, 3, 4, 5

log = logging.getLogger("korteweg_fv")


def _snapshot_writer(directory: Path, formats):
    directory.mkdir(parents=True, exist_ok=True)
    counter = [0]

    def obs(state, row):
        stem = directory / f"snap_{counter[0]:06d}"
        if "binary" in formats:
            write_snapshot(state, stem.with_suffix(".kfv"))
        if "csv" in formats:
            dump_csv(state, stem.with_suffix(".csv"))
        counter[0] += 1

    return obs


def cmd_run(args) -> int:
    cfg = load_config(args.config)
    out = output_dir(cfg, args.out)
    out.mkdir(parents=True, exist_ok=True)
    formats = {f.strip() for f in cfg.outputs.get("formats", "binary").split(",")}
    s0 = project(cfg.init, cfg.grid)
    summary = {"config": cfg.to_ini(), "status": "ok"}
    code = EXIT_OK
    traj = None
    try:
        traj = integrate_to(
            s0, cfg.control, cfg.params,
            observers=[_snapshot_writer(out / "snapshots", formats)],
            ledger_path=out / "ledger.csv",
        )
    except VacuumBreakdown as exc:
        code, summary["status"] = EXIT_VACUUM, "vacuum_breakdown"
        summary["breakdown"] = {"cell": list(exc.cell), "t": exc.t, "rho": exc.rho_value, "floor": exc.floor}
        traj = exc.trajectory
        print(f"error: {exc}", file=sys.stderr)
    except StabilityFailure as exc:
        code, summary["status"] = EXIT_STABILITY, "stability_failure"
        summary["message"] = str(exc)
        traj = exc.trajectory
        print(f"error: {exc}", file=sys.stderr)
    if traj is not None and len(traj.ledger):
        led = traj.ledger
        summary["drift"] = drift(led)
        summary["min_energy_decrease"] = min_energy_decrease(led)
        summary["E_initial"] = led.rows[0].E_h
        summary["E_final"] = led.rows[-1].E_h
        summary["steps"] = traj.info.get("steps", len(led) - 1)
        summary["t_final"] = led.rows[-1].t
    (out / "summary.json").write_text(json.dumps(summary, indent=1, default=float))
    if code == EXIT_OK:
        print(f"run complete: {summary['steps']} steps, E {summary['E_initial']:.10g} -> {summary['E_final']:.10g}; output in {out}")
    return code


def load_run(directory) -> Trajectory:
    """Rebuild a trajectory from a run directory (snapshots, ledger, summary)."""
    directory = Path(directory)
    try:
        summary = json.loads((directory / "summary.json").read_text())
        ledger = EnergyLedger.from_csv(directory / "ledger.csv")
    except (OSError, ValueError) as exc:
        raise ConfigError(f"{directory} is not a complete run directory: {exc}") from exc
    cfg = parse_config(summary["config"])
    files = sorted((directory / "snapshots").glob("snap_*.kfv"))
    if not files:
        raise ConfigError(f"{directory}/snapshots holds no binary snapshots")
    snaps = [read_snapshot(f) for f in files]
    return Trajectory(snaps, ledger, cfg.params, cfg.control)


def cmd_check_envar(args) -> int:
    traj = load_run(args.run_dir)
    g = traj.grid
    t_cut = args.t_cut if args.t_cut is not None else 0.8 * traj.times[-1]
    pairs = catalog(g.Lx, g.Ly, t_cut)
    if args.catalog != "all":
        wanted = [n.strip() for n in args.catalog.split(",")]
        known = {p.name for p in pairs}
        missing = set(wanted) - known
        if missing:
            raise ConfigError(f"unknown test functions {sorted(missing)}; available: {sorted(known)}")
        pairs = [p for p in pairs if p.name in wanted]
    if args.perturb_energy:
        try:
            t_p, factor = (float(v) for v in args.perturb_energy.split(":"))
            traj = with_energy_perturbed(traj, t_p, factor)
        except (ValueError, KeyError) as exc:
            raise ConfigError(f"--perturb-energy {args.perturb_energy!r}: {exc}") from exc
    times = None
    if args.s is not None or args.t is not None:
        if args.s is None or args.t is None:
            raise ConfigError("give both --s and --t, or neither")
        try:
            times = [traj.times[traj.index_of(args.s)], traj.times[traj.index_of(args.t)]]
        except KeyError as exc:
            raise ConfigError(str(exc)) from exc
    records = evaluate_catalog(traj, pairs, min_gap=args.min_gap, gradient=args.gradient, times=times)
    report = Path(args.report) if args.report else Path(args.run_dir) / "envar_report"
    write_report(records, report)
    n_fail = sum(not r.passed for r in records)
    print(f"{len(records)} residuals evaluated, {n_fail} above tolerance; report in {report}.txt")
    return EXIT_OK if n_fail == 0 else EXIT_AUDIT


def cmd_converge(args) -> int:
    cfg = load_config(args.config)
    if cfg.study is None:
        raise ConfigError("configuration has no [study] section")
    st = cfg.study
    study = RefinementStudy(
        cfg.init, cfg.params, cfg.grid.Lx, cfg.grid.Ly, st["levels"], cfg.control.t_end,
        compare_times=st["compare_times"], method=cfg.control.method, cfl=cfg.control.cfl,
        min_decrease=st["min_decrease"], tol_E=cfg.control.tol_E,
    )
    workers = args.workers or thread_count(st["workers"])
    try:
        results = run_study(study, workers)
    except LevelBreakdown as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VACUUM if isinstance(exc.cause, VacuumBreakdown) else EXIT_STABILITY
    out = output_dir(cfg, args.out)
    out.mkdir(parents=True, exist_ok=True)
    rep = study_report(study, results, out / "study_report")
    print((out / "study_report.txt").read_text())
    return EXIT_OK if rep["passed"] else EXIT_AUDIT


def cmd_project(args) -> int:
    cfg = load_config(args.config)
    s = project(cfg.init, cfg.grid)
    out = output_dir(cfg, args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_snapshot(s, out / "initial.kfv")
    if args.csv:
        dump_csv(s, out / "initial.csv")
    E = discrete_energy(s, cfg.params)
    ref = reference_energy(cfg.init, cfg.params)
    print(f"mass {s.mass():.15g} (exact {cfg.init.total_mass():.15g})")
    print(f"E_h(0) {E:.15g}, reference energy {ref:.15g}, gap {ref - E:.3e}")
    print(f"rho range [{np.min(s.rho):.6g}, {np.max(s.rho):.6g}]; written to {out / 'initial.kfv'}")
    return EXIT_OK


def cmd_describe(args) -> int:
    cfg = load_config(args.config)
    sys.stdout.write(cfg.to_ini())
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="korteweg-fv", description="Structure-preserving Korteweg finite-volume solver")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="integrate a configuration to t_end")
    p.add_argument("config")
    p.add_argument("--out", help="output directory (overrides config and environment)")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("check-envar", help="evaluate variational residuals on a finished run")
    p.add_argument("run_dir")
    p.add_argument("--catalog", default="all", help="comma-separated test-function names, or 'all'")
    p.add_argument("--s", type=float)
    p.add_argument("--t", type=float)
    p.add_argument("--min-gap", type=float, default=0.0)
    p.add_argument("--t-cut", type=float, help="cutoff time of the compactly supported test functions")
    p.add_argument("--gradient", choices=("forward", "central"), default="forward")
    p.add_argument("--perturb-energy", metavar="T:FACTOR", help="scale the ledger energy at time T (negative control)")
    p.add_argument("--report", help="report path stem")
    p.set_defaults(func=cmd_check_envar)

    p = sub.add_parser("converge", help="run a refinement study")
    p.add_argument("config")
    p.add_argument("--out")
    p.add_argument("--workers", type=int)
    p.set_defaults(func=cmd_converge)

    p = sub.add_parser("project", help="project the initial data and report mass and energy")
    p.add_argument("config")
    p.add_argument("--out")
    p.add_argument("--csv", action="store_true")
    p.set_defaults(func=cmd_project)

    p = sub.add_parser("describe", help="print the fully resolved configuration")
    p.add_argument("config")
    p.set_defaults(func=cmd_describe)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ConfigError, InitialDataError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
