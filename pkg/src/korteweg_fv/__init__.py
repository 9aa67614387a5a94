"""Structure-preserving finite volumes for Euler-Korteweg and Navier-Stokes-Korteweg flow."""
from .grid import GridSpec, GridError
from .state import FluidState, ModelParams, VacuumBreakdown, discrete_energy
from .scheme import assemble_rhs, compute_lambda, dissipation_residual
from .timeint import StepControl, StabilityFailure, Trajectory, integrate_to, step
from .diagnostics import EnergyLedger, LedgerRow, bv_norm
from .initial_data import InitExpr, project
from .envar import TestFunctionPair, catalog, evaluate_catalog, regularity_weight

__version__ = "0.1.0"
