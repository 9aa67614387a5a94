"""Structure-preservation ledger: conserved totals, energy, dissipation, lambda."""
from __future__ import annotations

import csv
import math
from dataclasses import astuple, dataclass, fields
from pathlib import Path

import numpy as np
from scipy.integrate import trapezoid

from .grid import dg_seminorm_sq
from .scheme import LambdaReport, Tendency, dissipation_terms, energy_rate
from .state import FluidState, ModelParams, discrete_energy, velocity

__all__ = [
    "LedgerRow",
    "EnergyLedger",
    "record",
    "bv_norm",
    "energy_increments",
    "time_integral",
    "drift",
    "min_energy_decrease",
]


@dataclass(frozen=True)
class LedgerRow:
    t: float
    mass: float
    momentum_x: float
    momentum_y: float
    E_h: float
    D_visc_dev: float
    D_visc_div: float
    D_rusanov: float
    lambda_: float
    dt: float
    semidiscrete_residual: float
    dg_u: float
    dg_rho: float

    @property
    def dissipation(self) -> float:
        return self.D_visc_dev + self.D_visc_div + self.D_rusanov


# "lambda" is reserved in Python; the CSV header uses the plain name
FIELDS = tuple("lambda" if f.name == "lambda_" else f.name for f in fields(LedgerRow))


def _fmt(x: float) -> str:
    return format(x, ".17g")


class EnergyLedger:
    """Append-only table of :class:`LedgerRow`.

    With ``path`` set, the CSV header is written on creation and every
    appended row is flushed immediately.
    """

    def __init__(self, rows=(), path=None):
        self.rows: list[LedgerRow] = []
        self._fh = None
        if path is not None:
            self._fh = open(path, "w", newline="")
            self._fh.write(",".join(FIELDS) + "\n")
            self._fh.flush()
        for r in rows:
            self.append(r)

    def append(self, row: LedgerRow) -> None:
        self.rows.append(row)
        if self._fh is not None:
            self._fh.write(",".join(_fmt(v) for v in astuple(row)) + "\n")
            self._fh.flush()

    def close(self):
        if self._fh is not None:
            self._fh.close()
            self._fh = None

    def __len__(self):
        return len(self.rows)

    def __iter__(self):
        return iter(self.rows)

    def __getitem__(self, i):
        return self.rows[i]

    def column(self, name: str) -> np.ndarray:
        attr = "lambda_" if name == "lambda" else name
        return np.array([getattr(r, attr) for r in self.rows], dtype=float)

    def energy_at(self, t: float, rtol: float = 1e-12) -> float:
        times = self.column("t")
        k = int(np.argmin(np.abs(times - t)))
        if abs(times[k] - t) > rtol * max(1.0, abs(t)):
            raise KeyError(f"no ledger row at t={t}")
        return self.rows[k].E_h

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            fh.write(",".join(FIELDS) + "\n")
            for r in self.rows:
                fh.write(",".join(_fmt(v) for v in astuple(r)) + "\n")

    @classmethod
    def from_csv(cls, path) -> "EnergyLedger":
        with open(Path(path), newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader)
            if tuple(header) != FIELDS:
                raise ValueError(f"unexpected ledger header {header}")
            rows = [LedgerRow(*(float(v) for v in line)) for line in reader if line]
        return cls(rows)


def record(
    s: FluidState,
    tendency: Tendency,
    report: LambdaReport,
    dt: float,
    params: ModelParams,
) -> LedgerRow:
    """Evaluate every ledger field at ``s``.

    The semidiscrete residual uses the chain-rule energy rate along
    ``tendency``, never a difference quotient across steps.
    """
    u = velocity(s, params)
    lam = report.value
    d_dev, d_div, d_rus = dissipation_terms(s, lam, params, u)
    edot = energy_rate(s, tendency, params, u)
    mom = s.momentum()
    return LedgerRow(
        t=s.t,
        mass=s.mass(),
        momentum_x=float(mom[0]),
        momentum_y=float(mom[1]),
        E_h=discrete_energy(s, params),
        D_visc_dev=d_dev,
        D_visc_div=d_div,
        D_rusanov=d_rus,
        lambda_=lam,
        dt=float(dt),
        semidiscrete_residual=edot + d_dev + d_div + d_rus,
        dg_u=dg_seminorm_sq(u),
        dg_rho=dg_seminorm_sq(s.rho),
    )


def bv_norm(ledger) -> float:
    """``|E(t0)| + sum |E(t_{n+1}) - E(t_n)|`` over the ledger's energy column.

    Accepts an :class:`EnergyLedger` or a plain sequence of energies.
    """
    e = ledger.column("E_h") if isinstance(ledger, EnergyLedger) else np.asarray(ledger, dtype=float)
    if e.size == 0:
        raise ValueError("bv_norm of an empty ledger")
    return float(abs(e[0]) + np.sum(np.abs(np.diff(e))))


def energy_increments(ledger: EnergyLedger) -> np.ndarray:
    """Per-step ``E(t_{n+1}) - E(t_n)``: the fully discrete counterpart of the rate."""
    return np.diff(ledger.column("E_h"))


def time_integral(ledger: EnergyLedger, name: str) -> float:
    """Trapezoid rule for a ledger column over the recorded times."""
    t = ledger.column("t")
    y = ledger.column(name)
    if t.size < 2:
        return 0.0
    return float(trapezoid(y, t))


def drift(ledger: EnergyLedger) -> dict:
    first, last = ledger.rows[0], ledger.rows[-1]
    return {
        "mass": last.mass - first.mass,
        "momentum_x": last.momentum_x - first.momentum_x,
        "momentum_y": last.momentum_y - first.momentum_y,
    }


def min_energy_decrease(ledger: EnergyLedger) -> float:
    inc = energy_increments(ledger)
    return float(-inc.max()) if inc.size else math.nan
