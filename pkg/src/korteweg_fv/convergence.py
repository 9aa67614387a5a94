"""Mesh-refinement studies: Cauchy differences, lambda schedule and uniform bounds.

No convergence rate is asserted. The harness only checks that differences
between successive levels shrink by a configurable factor, which is the
computable shadow of subsequence convergence.

Cells are centered at ``i*h``, so a coarse cell of a doubled grid does not
consist of whole fine cells: it covers one fine cell and half of each
neighbour. :func:`restrict_aligned` averages over the exact overlap and is
what the Cauchy table uses; :func:`restrict` is the plain block mean.
"""
from __future__ import annotations

import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .diagnostics import bv_norm, time_integral
from .grid import GridSpec, integrate
from .initial_data import InitExpr, project
from .state import ModelParams, velocity
from .timeint import StepControl, integrate_to

__all__ = [
    "restrict",
    "restrict_aligned",
    "RefinementStudy",
    "LevelResult",
    "run_study",
    "cauchy_table",
    "lambda_audit",
    "uniform_bounds_audit",
    "study_report",
    "LevelBreakdown",
]

CAVEAT = (
    "Successive-level differences are a self-convergence surrogate. "
    "Their decrease is checked against a minimum factor; no order of convergence is claimed."
)


class LevelBreakdown(RuntimeError):
    def __init__(self, level, shape, cause):
        super().__init__(f"level {level} ({shape[0]}x{shape[1]}) failed: {cause}")
        self.level = level
        self.shape = shape
        self.cause = cause


def _check_factor(f, factor):
    if int(factor) != factor or factor < 1:
        raise ValueError(f"factor must be a positive integer, got {factor}")
    M, N = f.shape[-2:]
    if M % factor or N % factor:
        raise ValueError(f"factor {factor} does not divide the grid {M}x{N}")
    return int(factor)


def restrict(f: np.ndarray, factor: int) -> np.ndarray:
    """Mean over each ``factor x factor`` block of fine cells ``[k*factor, (k+1)*factor)``."""
    f = np.asarray(f, dtype=float)
    r = _check_factor(f, factor)
    M, N = f.shape[-2:]
    return f.reshape(f.shape[:-2] + (M // r, r, N // r, r)).mean(axis=(-3, -1))


def _overlap_weights(r: int) -> np.ndarray:
    """Weights of fine offsets ``-r//2 .. r//2`` in a coarse cell centered on fine cell 0."""
    if r % 2:
        return np.full(r, 1.0 / r)
    w = np.full(r + 1, 1.0 / r)
    w[0] = w[-1] = 0.5 / r
    return w


def restrict_aligned(f: np.ndarray, factor: int) -> np.ndarray:
    """Exact average of the fine piecewise-constant field over each coarse cell.

    With centers at ``i*h``, coarse cell ``I`` is centered on fine cell
    ``factor*I``; for even factors the two boundary fine cells count half.
    """
    f = np.asarray(f, dtype=float)
    r = _check_factor(f, factor)
    w = _overlap_weights(r)
    offs = np.arange(len(w)) - len(w) // 2
    g = sum(wk * np.roll(f, -o, axis=-2) for wk, o in zip(w, offs))
    g = sum(wk * np.roll(g, -o, axis=-1) for wk, o in zip(w, offs))
    return g[..., ::r, ::r]


@dataclass(frozen=True)
class RefinementStudy:
    """Levels ``(M0 * 2**l, N0 * 2**l)`` sharing domain, parameters, data and end time."""

    expr: InitExpr
    params: ModelParams
    Lx: float
    Ly: float
    levels: tuple
    t_end: float
    compare_times: tuple = ()
    method: str = "ssprk3"
    cfl: float | None = None
    min_decrease: float = 1.2
    tol_E: float = 1e-8

    def __post_init__(self):
        lv = tuple((int(M), int(N)) for M, N in self.levels)
        if len(lv) < 2:
            raise ValueError("a study needs at least two levels")
        for (M0, N0), (M1, N1) in zip(lv, lv[1:]):
            if M1 != 2 * M0 or N1 != 2 * N0:
                raise ValueError(f"levels must double in both directions, got {M0}x{N0} -> {M1}x{N1}")
        if not (math.isclose(self.expr.Lx, self.Lx) and math.isclose(self.expr.Ly, self.Ly)):
            raise ValueError("initial data and study use different domain lengths")
        times = tuple(sorted(set(float(t) for t in self.compare_times) | {float(self.t_end)}))
        if times[0] < 0 or times[-1] > self.t_end:
            raise ValueError("comparison times must lie in [0, t_end]")
        object.__setattr__(self, "levels", lv)
        object.__setattr__(self, "compare_times", times)

    @classmethod
    def doubling(cls, expr, params, M0, N0, n_levels, t_end, **kw):
        levels = tuple((M0 * 2**l, N0 * 2**l) for l in range(n_levels))
        return cls(expr, params, expr.Lx, expr.Ly, levels, t_end, **kw)

    def grid(self, level: int) -> GridSpec:
        M, N = self.levels[level]
        return GridSpec(self.Lx, self.Ly, M, N)

    @property
    def mode(self) -> str:
        return self.params.mode


@dataclass
class LevelResult:
    level: int
    grid: GridSpec
    snapshots: dict  # comparison time -> FluidState
    ledger: object
    lambda_max: float
    steps: int
    info: dict = field(default_factory=dict)


def _run_level(study: RefinementStudy, level: int) -> LevelResult:
    g = study.grid(level)
    s0 = project(study.expr, g)
    ctrl = StepControl(
        t_end=study.t_end,
        cfl=study.cfl,
        method=study.method,
        snapshot_stride=10**9,
        snapshot_times=study.compare_times,
        tol_E=study.tol_E,
    )
    try:
        traj = integrate_to(s0, ctrl, study.params)
    except Exception as exc:  # vacuum or stability, re-labelled with the level
        raise LevelBreakdown(level, study.levels[level], exc) from exc
    snaps = {t: traj.snapshot_at(t) for t in study.compare_times}
    lam = traj.ledger.column("lambda")
    return LevelResult(level, g, snaps, traj.ledger, float(lam.max()), traj.info.get("steps", 0))


def run_study(study: RefinementStudy, workers: int = 1) -> list[LevelResult]:
    """Run every level; ``workers > 1`` runs levels in separate processes."""
    n = len(study.levels)
    if workers <= 1:
        return [_run_level(study, l) for l in range(n)]
    with ProcessPoolExecutor(max_workers=min(workers, n)) as pool:
        futures = [pool.submit(_run_level, study, l) for l in range(n)]
        return [f.result() for f in futures]


def _lp(f, grid, p):
    """``L^p`` norm of a scalar or (leading-axis) vector field."""
    mag = np.sqrt(np.sum(f**2, axis=0)) if f.ndim == 3 else np.abs(f)
    return integrate(mag**p, grid) ** (1.0 / p)


def cauchy_table(study: RefinementStudy, results: list[LevelResult]) -> dict:
    """Differences between adjacent levels, max over the comparison times.

    Columns: ``rho_L2``, ``m_Lr`` (``r = 2 gamma/(gamma + 1)``), ``grad_rho_L2``,
    ``E_final`` and, when both viscosities are positive, ``u_L2``.
    """
    if len(results) < 2:
        raise ValueError("need at least two completed levels")
    params = study.params
    r = 2.0 * params.gamma / (params.gamma + 1.0)
    viscous = params.mode == "NSK"
    rows = []
    for fine, coarse in zip(results[1:], results[:-1]):
        gc = coarse.grid
        row = {"pair": f"{fine.grid.M}x{fine.grid.N} vs {gc.M}x{gc.N}", "rho_L2": 0.0, "m_Lr": 0.0, "grad_rho_L2": 0.0}
        if viscous:
            row["u_L2"] = 0.0
        for t in study.compare_times:
            try:
                sf, sc = fine.snapshots[t], coarse.snapshots[t]
            except KeyError as exc:
                raise KeyError(f"missing snapshot at t={t}") from exc
            gf = sf.grid
            rho_f = restrict_aligned(sf.rho, 2)
            m_f = restrict_aligned(sf.m, 2)
            grad_f = restrict_aligned(np.stack([gf.dxp(sf.rho), gf.dyp(sf.rho)]), 2)
            grad_c = np.stack([gc.dxp(sc.rho), gc.dyp(sc.rho)])
            row["rho_L2"] = max(row["rho_L2"], _lp(rho_f - sc.rho, gc, 2))
            row["m_Lr"] = max(row["m_Lr"], _lp(m_f - sc.m, gc, r))
            row["grad_rho_L2"] = max(row["grad_rho_L2"], _lp(grad_f - grad_c, gc, 2))
            if viscous:
                u_f = restrict_aligned(velocity(sf, params), 2)
                row["u_L2"] = max(row["u_L2"], _lp(u_f - velocity(sc, params), gc, 2))
        row["E_final"] = abs(fine.ledger.rows[-1].E_h - coarse.ledger.rows[-1].E_h)
        rows.append(row)
    columns = [c for c in rows[0] if c != "pair"]
    ratios = {}
    monotone = True
    for c in columns:
        vals = [row[c] for row in rows]
        rs = []
        for a, b in zip(vals, vals[1:]):
            rs.append(a / b if b > 0 else (math.inf if a > 0 else 1.0))
        ratios[c] = rs
        # a column that is already at roundoff level cannot be asked to shrink further
        floor = 1e-13 * (1.0 + max(vals))
        ok = all(rt >= study.min_decrease or b <= floor for rt, b in zip(rs, vals[1:]))
        monotone &= ok
    return {
        "columns": columns,
        "rows": rows,
        "ratios": ratios,
        "min_decrease": study.min_decrease,
        "monotone": bool(monotone),
        "weak_only": not viscous,
    }


def lambda_audit(results: list[LevelResult]) -> dict:
    """``lambda h`` and ``h / lambda`` per level, with the largest recorded lambda."""
    rows = []
    for res in results:
        h = res.grid.h
        lam = res.lambda_max
        rows.append({"M": res.grid.M, "N": res.grid.N, "h": h, "lambda": lam, "lambda_h": lam * h,
                     "h_over_lambda": h / lam if lam > 0 else math.inf})
    lh = [r["lambda_h"] for r in rows]
    hl = [r["h_over_lambda"] for r in rows]
    lams = [r["lambda"] for r in rows]
    stable = max(lams) <= 1.1 * min(lams) if min(lams) > 0 else False
    return {
        "rows": rows,
        "lambda_h_decreasing": bool(all(b < a for a, b in zip(lh, lh[1:]))),
        "h_over_lambda_decreasing": bool(all(b < a for a, b in zip(hl, hl[1:]))),
        "lambda_within_10pct": bool(stable),
    }


def uniform_bounds_audit(results: list[LevelResult], factor: float = 2.0) -> dict:
    """Energy supremum, time-integrated dissipation and energy variation per level.

    A level is flagged when any quantity exceeds ``factor`` times the
    coarsest level's value.
    """
    if len(results) < 2:
        raise ValueError("need at least two levels")
    keys = ("sup_E", "int_D_visc_dev", "int_D_visc_div", "int_D_rusanov", "bv")
    rows = []
    for res in results:
        led = res.ledger
        rows.append({
            "M": res.grid.M,
            "N": res.grid.N,
            "sup_E": float(led.column("E_h").max()),
            "int_D_visc_dev": time_integral(led, "D_visc_dev"),
            "int_D_visc_div": time_integral(led, "D_visc_div"),
            "int_D_rusanov": time_integral(led, "D_rusanov"),
            "bv": bv_norm(led),
        })
    base = rows[0]
    flags = []
    for row in rows[1:]:
        for k in keys:
            limit = factor * base[k] + 1e-14 * (1.0 + abs(base["sup_E"]))
            if row[k] > limit:
                flags.append(f"{row['M']}x{row['N']}: {k} = {row[k]:.6e} > {factor} x coarsest ({base[k]:.6e})")
    empirical_C = {k: max(r[k] for r in rows) for k in keys}
    return {"rows": rows, "empirical_C": empirical_C, "flags": flags, "ok": not flags}


def study_report(study, results, path=None) -> dict:
    """Assemble the Cauchy table and both audits; optionally write ``.json`` and ``.txt``."""
    report = {
        "caveat": CAVEAT,
        "mode": study.mode,
        "levels": [list(l) for l in study.levels],
        "compare_times": list(study.compare_times),
        "cauchy": cauchy_table(study, results),
        "lambda": lambda_audit(results),
        "bounds": uniform_bounds_audit(results),
    }
    if study.mode != "NSK":
        report["note"] = "inviscid or mixed mode: only the weak-surrogate columns are reported (no velocity column)"
    report["passed"] = bool(report["cauchy"]["monotone"] and report["bounds"]["ok"])
    if path is not None:
        path = Path(path)
        path.with_suffix(".json").write_text(json.dumps(report, indent=1, default=float))
        path.with_suffix(".txt").write_text(_format(report))
    return report


def _format(rep) -> str:
    c = rep["cauchy"]
    lines = [rep["caveat"], "", f"mode: {rep['mode']}", "", "Cauchy differences (max over comparison times):"]
    lines.append(f"{'pair':<22}" + "".join(f"{k:>15}" for k in c["columns"]))
    for row in c["rows"]:
        lines.append(f"{row['pair']:<22}" + "".join(f"{row[k]:15.6e}" for k in c["columns"]))
    lines.append("ratios: " + ", ".join(f"{k}={[round(x, 3) for x in v]}" for k, v in c["ratios"].items()))
    lines.append(f"monotone decrease (factor >= {c['min_decrease']}): {c['monotone']}")
    lines += ["", "lambda schedule:"]
    for r in rep["lambda"]["rows"]:
        lines.append(f"  {r['M']}x{r['N']}: lambda={r['lambda']:.6g} lambda*h={r['lambda_h']:.6g} h/lambda={r['h_over_lambda']:.6g}")
    lines += ["", "uniform bounds:"]
    for r in rep["bounds"]["rows"]:
        lines.append("  " + " ".join(f"{k}={v:.6g}" if isinstance(v, float) else f"{k}={v}" for k, v in r.items()))
    lines.append("flags: " + ("none" if not rep["bounds"]["flags"] else "; ".join(rep["bounds"]["flags"])))
    if "note" in rep:
        lines += ["", rep["note"]]
    lines.append(f"\npassed: {rep['passed']}")
    return "\n".join(lines) + "\n"
