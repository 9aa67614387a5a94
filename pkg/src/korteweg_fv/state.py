"""Model constants, the prognostic state and the thermodynamic closures.

The pressure law is barotropic, ``p(rho) = k rho**gamma``, with the pressure
potential ``P(rho) = k rho**gamma / (gamma - 1)`` so that
``rho P'(rho) = p(rho) + P(rho)``.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .grid import GridSpec, dg_seminorm_sq, integrate

log = logging.getLogger(__name__)

__all__ = [
    "ModelParams",
    "FluidState",
    "VacuumBreakdown",
    "pressure",
    "pressure_potential",
    "pressure_derivative",
    "sound_speed",
    "eta_tilde",
    "energy_density",
    "discrete_energy",
    "velocity",
]


class VacuumBreakdown(RuntimeError):
    """A cell density fell to or below the vacuum floor.

    This is the observable form of the maximal existence time of the
    semidiscrete ODE: past it the right-hand side is no longer Lipschitz.
    """

    def __init__(self, cell, t, rho_value, floor, last_state=None):
        self.cell = tuple(int(c) for c in cell)
        self.t = float(t)
        self.rho_value = float(rho_value)
        self.floor = float(floor)
        self.last_state = last_state
        self.trajectory = None
        super().__init__(
            f"vacuum breakdown at cell (i, j) = {self.cell}, t = {self.t:.6g}: "
            f"rho = {self.rho_value:.3e} <= floor {self.floor:.3e}"
        )


@dataclass(frozen=True)
class ModelParams:
    """Physical and numerical constants.

    ``lambda_fixed=None`` selects the automatic Rusanov-type choice of the
    numerical dissipation parameter (half the largest ``|u| + sqrt(p'(rho))``);
    a number fixes it. ``rho_floor=None`` defers the vacuum threshold to
    ``1e-10 * mean(rho0)`` at integration start.
    """

    k: float = 1.0
    gamma: float = 2.0
    kappa: float = 1e-3
    mu: float = 0.0
    eta: float = 0.0
    lambda_fixed: float | None = None
    cfl: float = 0.4
    rho_floor: float | None = None

    def __post_init__(self):
        if not self.k > 0:
            raise ValueError(f"k must be > 0, got {self.k}")
        if not self.gamma > 1:
            raise ValueError(f"gamma must be > 1, got {self.gamma}")
        if not self.kappa > 0:
            raise ValueError(f"kappa must be > 0, got {self.kappa}")
        if self.mu < 0 or self.eta < 0:
            raise ValueError(f"viscosities must be >= 0, got mu={self.mu}, eta={self.eta}")
        if self.lambda_fixed is not None and not self.lambda_fixed >= 0:
            raise ValueError(f"fixed lambda must be >= 0, got {self.lambda_fixed}")
        if not 0 < self.cfl <= 1:
            raise ValueError(f"cfl must lie in (0, 1], got {self.cfl}")
        if self.rho_floor is not None and not self.rho_floor > 0:
            raise ValueError(f"rho_floor must be > 0, got {self.rho_floor}")

    @property
    def mode(self) -> str:
        """'EK' (inviscid), 'NSK' (both viscosities positive) or 'mixed'."""
        if self.mu == 0 and self.eta == 0:
            return "EK"
        if self.mu > 0 and self.eta > 0:
            return "NSK"
        return "mixed"

    @property
    def lambda_policy(self) -> str:
        return "rusanov_auto" if self.lambda_fixed is None else "fixed"

    def floor_for(self, rho: np.ndarray) -> float:
        if self.rho_floor is not None:
            return self.rho_floor
        return 1e-10 * float(np.mean(rho))


@dataclass(frozen=True)
class FluidState:
    """Density and momentum ``m = rho*u`` on a grid at time ``t``.

    ``rho`` has shape ``(M, N)``, ``m`` has shape ``(2, M, N)``.
    """

    grid: GridSpec
    rho: np.ndarray
    m: np.ndarray
    t: float = 0.0
    meta: dict = field(default_factory=dict, compare=False, repr=False)

    def __post_init__(self):
        rho = self.grid.check(self.rho)
        m = self.grid.check(self.m)
        if m.shape != (2,) + self.grid.shape:
            raise ValueError(f"momentum must have shape {(2,) + self.grid.shape}, got {m.shape}")
        if not (np.all(np.isfinite(rho)) and np.all(np.isfinite(m))):
            raise ValueError("state contains non-finite values")
        object.__setattr__(self, "rho", rho)
        object.__setattr__(self, "m", m)
        object.__setattr__(self, "t", float(self.t))

    @classmethod
    def constant(cls, grid, rho=1.0, u=(0.0, 0.0), t=0.0):
        r = np.full(grid.shape, float(rho))
        m = np.stack([r * u[0], r * u[1]])
        return cls(grid, r, m, t)

    def replace(self, rho=None, m=None, t=None) -> "FluidState":
        return FluidState(
            self.grid,
            self.rho if rho is None else rho,
            self.m if m is None else m,
            self.t if t is None else t,
        )

    def shifted(self, dx: int, dy: int) -> "FluidState":
        roll = lambda f: np.roll(f, (-dx, -dy), axis=(-2, -1))
        return FluidState(self.grid, roll(self.rho), roll(self.m), self.t)

    def mass(self) -> float:
        return integrate(self.rho, self.grid)

    def momentum(self) -> np.ndarray:
        return integrate(self.m, self.grid)

    def dg_rho(self) -> float:
        return dg_seminorm_sq(self.rho)


def _nonneg(rho):
    rho = np.asarray(rho, dtype=float)
    if np.any(rho < 0):
        raise ValueError("pressure law is defined for rho >= 0 only")
    return rho


def pressure(rho, params: ModelParams):
    """``p(rho) = k rho**gamma``."""
    return params.k * _nonneg(rho) ** params.gamma


def pressure_potential(rho, params: ModelParams):
    """``P(rho) = k rho**gamma / (gamma - 1)``."""
    return params.k * _nonneg(rho) ** params.gamma / (params.gamma - 1.0)


def pressure_derivative(rho, params: ModelParams):
    """``p'(rho) = k gamma rho**(gamma - 1)``."""
    return params.k * params.gamma * _nonneg(rho) ** (params.gamma - 1.0)


def sound_speed(rho, params: ModelParams):
    return np.sqrt(pressure_derivative(rho, params))


def eta_tilde(rho, m, params: ModelParams):
    """Kinetic plus internal energy density, extended to the closed half-space.

    ``|m|^2/(2 rho) + P(rho)`` for ``rho > 0``, ``0`` at ``(0, 0)``, ``+inf``
    elsewhere. ``m`` carries its two components on the leading axis. Works on
    scalars and on fields.
    """
    rho = np.asarray(rho, dtype=float)
    m = np.asarray(m, dtype=float)
    m2 = m[0] ** 2 + m[1] ** 2
    pos = rho > 0
    safe = np.where(pos, rho, 1.0)
    val = m2 / (2.0 * safe) + params.k * np.abs(safe) ** params.gamma / (params.gamma - 1.0)
    origin = (rho == 0) & (m2 == 0)
    out = np.where(pos, val, np.where(origin, 0.0, np.inf))
    return float(out) if out.ndim == 0 else out


def energy_density(s: FluidState, params: ModelParams) -> np.ndarray:
    """Cellwise ``eta_tilde(rho, m) + kappa/2 |forward gradient of rho|^2``."""
    g = s.grid
    grad2 = g.dxp(s.rho) ** 2 + g.dyp(s.rho) ** 2
    return eta_tilde(s.rho, s.m, params) + 0.5 * params.kappa * grad2


def discrete_energy(s: FluidState, params: ModelParams) -> float:
    """Total discrete energy ``(|Omega|/MN) * sum(energy_density)``.

    A vacuum cell carrying momentum yields ``+inf``; that is logged, not raised.
    """
    e = energy_density(s, params)
    if not np.all(np.isfinite(e)):
        bad = np.argwhere(~np.isfinite(e))[0]
        log.warning("infinite energy density at cell %s, t=%g (vacuum with momentum)", tuple(bad), s.t)
        return math.inf
    return integrate(e, s.grid)


def check_density(s: FluidState, floor: float) -> None:
    rho = s.rho
    idx = np.unravel_index(np.argmin(rho), rho.shape)
    if not rho[idx] > floor:
        raise VacuumBreakdown(idx, s.t, rho[idx], floor)


def velocity(s: FluidState, params: ModelParams) -> np.ndarray:
    """``u = m / rho`` cellwise; raises :class:`VacuumBreakdown` at the emptiest cell."""
    check_density(s, params.floor_for(s.rho))
    return s.m / s.rho
