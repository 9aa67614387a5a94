"""
When the density runs out
==========================

Existence of the discrete solution is only local: nothing stops a strong
outflow from emptying a cell. A deep density well with flow pointing away
from its center is drained until a cell falls below the vacuum floor, and
the integrator stops with a report instead of producing garbage.
"""

# %%
import numpy as np

from korteweg_fv import GridSpec, InitExpr, ModelParams, StepControl, VacuumBreakdown, integrate_to, project

expr = InitExpr(density="bubble", amp=-0.95, width=0.12, velocity="solid", A=-3.0, B=-3.0)
s0 = project(expr, GridSpec(1.0, 1.0, 32, 32))
print("initial minimum density", s0.rho.min())

# %%
params = ModelParams(kappa=1e-4, rho_floor=0.02)
try:
    integrate_to(s0, StepControl(t_end=0.5), params)
except VacuumBreakdown as exc:
    print(exc)
    partial = exc.trajectory
    print("cell", exc.cell, "time", exc.t)
    print("ledger rows before the failure:", len(partial.ledger))
    print("last valid minimum density", exc.last_state.rho.min())

# %%
# The energy kept decreasing right up to the breakdown.
E = partial.ledger.column("E_h")
print("E_h monotone:", bool(np.all(np.diff(E) <= 1e-8 * E[0])))
