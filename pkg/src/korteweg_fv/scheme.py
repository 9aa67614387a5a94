"""Semidiscrete right-hand side of the finite-volume scheme.

The momentum tendency is split into three addends that are exposed for
testing; the public tendency is their sum.

Transcription table for the Korteweg addend of the x-momentum (the
y-momentum is the same table with x and y, i and j exchanged). ``L`` is the
five-point Laplacian of rho; ``Dx-``/``Dx+``/``Dxc`` are backward, forward and
central differences. The tendency is ``+kappa * (a - b + c - d)`` with

====  =========================================================  ======================
term  printed                                                    code
====  =========================================================  ======================
a     Dx-[(rho_ij L_{i+1,j} + rho_{i+1,j} L_ij) / 2]             ``dxm(0.5*(rho*Lr_e + rho_e*Lr))``
b     1/2 Dx-[(Dx+ rho_ij)^2]                                    ``0.5*dxm(dxp(rho)**2)``
c     1/2 Dx-[Dy- rho_{i+1,j} * Dy- rho_ij]                      ``0.5*dxm(shift(dym(rho),1,0)*dym(rho))``
d     Dy-[Dxc rho_ij * Dy+ rho_ij]                               ``dym(dxc(rho)*dyp(rho))``
====  =========================================================  ======================

No algebraic simplification is applied; the shifted products are kept as printed.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .grid import GridSpec, integrate, shift
from .state import (
    FluidState,
    ModelParams,
    pressure,
    pressure_derivative,
    pressure_potential,
    velocity,
)

__all__ = [
    "LambdaReport",
    "Tendency",
    "compute_lambda",
    "rusanov_lambda",
    "rhs_continuity",
    "convective_momentum",
    "viscous_momentum",
    "korteweg_momentum",
    "rhs_momentum",
    "assemble_rhs",
    "strain_parts",
    "dissipation_terms",
    "energy_rate",
    "dissipation_residual",
]


@dataclass(frozen=True)
class LambdaReport:
    """The numerical dissipation parameter actually used and where it was attained."""

    value: float
    argmax_cell: tuple[int, int]
    max_speed: float
    policy: str = "rusanov_auto"


@dataclass(frozen=True)
class Tendency:
    d_rho: np.ndarray
    d_m: np.ndarray


def rusanov_lambda(rho: np.ndarray, u: np.ndarray, params: ModelParams):
    """Return ``(lambda, argmax, max_speed)`` with ``lambda = max(|u| + sqrt(p'(rho))) / 2``."""
    speed = np.sqrt(u[0] ** 2 + u[1] ** 2) + np.sqrt(pressure_derivative(rho, params))
    idx = np.unravel_index(np.argmax(speed), speed.shape)
    vmax = float(speed[idx])
    return 0.5 * vmax, (int(idx[0]), int(idx[1])), vmax


def compute_lambda(s: FluidState, params: ModelParams) -> LambdaReport:
    u = velocity(s, params)
    lam, idx, vmax = rusanov_lambda(s.rho, u, params)
    if params.lambda_fixed is None:
        return LambdaReport(lam, idx, vmax, "rusanov_auto")
    return LambdaReport(float(params.lambda_fixed), idx, vmax, "fixed")


def rhs_continuity(s: FluidState, lam: float, params: ModelParams) -> np.ndarray:
    g = s.grid
    return -g.dxc(s.m[0]) - g.dyc(s.m[1]) + g.h * lam * g.lap(s.rho)


def convective_momentum(s: FluidState, lam: float, params: ModelParams, u=None) -> np.ndarray:
    """Central convective and pressure fluxes plus the ``h*lambda*Laplacian`` dissipation."""
    g = s.grid
    if u is None:
        u = velocity(s, params)
    mx, my = s.m
    p = pressure(s.rho, params)
    hl = g.h * lam
    dmx = -g.dxc(mx * u[0]) - g.dyc(mx * u[1]) - g.dxc(p) + hl * g.lap(mx)
    dmy = -g.dyc(my * u[1]) - g.dxc(mx * u[1]) - g.dyc(p) + hl * g.lap(my)
    return np.stack([dmx, dmy])


def viscous_momentum(s: FluidState, params: ModelParams, u=None) -> np.ndarray:
    """Discrete divergence of ``2 mu dev D+(u) + eta div+(u) I``.

    The minus signs inside the shear groups come from the deviator in 2-D;
    they are kept as printed.
    """
    g = s.grid
    if params.mu == 0 and params.eta == 0:
        return np.zeros_like(s.m)
    if u is None:
        u = velocity(s, params)
    ux, uy = u
    mu, eta = params.mu, params.eta
    dx_u, dy_u = g.dxp(ux), g.dyp(ux)
    dx_v, dy_v = g.dxp(uy), g.dyp(uy)
    shear_x = g.dxm(dx_u) + g.dym(dy_u) + g.dym(dx_v) - g.dxm(dy_v)
    shear_y = g.dxm(dy_u) + g.dym(dy_v) + g.dxm(dx_v) - g.dym(dx_u)
    bulk_x = g.dxm(dx_u) + g.dxm(dy_v)
    bulk_y = g.dym(dx_u) + g.dym(dy_v)
    return np.stack([mu * shear_x + eta * bulk_x, mu * shear_y + eta * bulk_y])


def korteweg_momentum(s: FluidState, params: ModelParams) -> np.ndarray:
    """Four-part discrete Korteweg force, see the module table."""
    g = s.grid
    rho = s.rho
    lr = g.lap(rho)

    rho_e, lr_e = shift(rho, 1, 0), shift(lr, 1, 0)
    a = g.dxm(0.5 * (rho * lr_e + rho_e * lr))
    b = 0.5 * g.dxm(g.dxp(rho) ** 2)
    dym_rho = g.dym(rho)
    c = 0.5 * g.dxm(shift(dym_rho, 1, 0) * dym_rho)
    d = g.dym(g.dxc(rho) * g.dyp(rho))
    fx = a - b + c - d

    rho_n, lr_n = shift(rho, 0, 1), shift(lr, 0, 1)
    a = g.dym(0.5 * (rho * lr_n + rho_n * lr))
    b = 0.5 * g.dym(g.dyp(rho) ** 2)
    dxm_rho = g.dxm(rho)
    c = 0.5 * g.dym(shift(dxm_rho, 0, 1) * dxm_rho)
    d = g.dxm(g.dyc(rho) * g.dxp(rho))
    fy = a - b + c - d

    return params.kappa * np.stack([fx, fy])


def rhs_momentum(s: FluidState, lam: float, params: ModelParams) -> np.ndarray:
    u = velocity(s, params)
    return (
        convective_momentum(s, lam, params, u)
        + viscous_momentum(s, params, u)
        + korteweg_momentum(s, params)
    )


def assemble_rhs(s: FluidState, params: ModelParams) -> tuple[Tendency, LambdaReport]:
    """Full tendency with a single lambda computed from the current state."""
    report = compute_lambda(s, params)
    lam = report.value
    return Tendency(rhs_continuity(s, lam, params), rhs_momentum(s, lam, params)), report


def strain_parts(u: np.ndarray, grid: GridSpec):
    """Return ``(a, b, div)`` where ``dev D+(u) = [[a, b], [b, -a]]`` and ``div = div+(u)``."""
    dx_u, dy_u = grid.dxp(u[0]), grid.dyp(u[0])
    dx_v, dy_v = grid.dxp(u[1]), grid.dyp(u[1])
    a = 0.5 * (dx_u - dy_v)
    b = 0.5 * (dy_u + dx_v)
    return a, b, dx_u + dy_v


def dissipation_terms(s: FluidState, lam: float, params: ModelParams, u=None):
    """``(2 mu int|dev D+u|^2, eta int|div+u|^2, kappa lambda h int (Lap rho)^2)``."""
    g = s.grid
    if u is None:
        u = velocity(s, params)
    a, b, div = strain_parts(u, g)
    d_dev = 2.0 * params.mu * integrate(2.0 * a * a + 2.0 * b * b, g)
    d_div = params.eta * integrate(div * div, g)
    d_rus = params.kappa * lam * g.h * integrate(g.lap(s.rho) ** 2, g)
    return d_dev, d_div, d_rus


def energy_rate(s: FluidState, tendency: Tendency, params: ModelParams, u=None) -> float:
    """Exact time derivative of the discrete energy along ``tendency`` (chain rule).

    ``d/dt E = int (-|u|^2/2 + P'(rho)) d_rho + u . d_m + kappa grad+ rho . grad+ d_rho``.
    """
    g = s.grid
    if u is None:
        u = velocity(s, params)
    rho = s.rho
    dP = (pressure(rho, params) + pressure_potential(rho, params)) / rho
    dr, dm = tendency.d_rho, tendency.d_m
    w = (dP - 0.5 * (u[0] ** 2 + u[1] ** 2)) * dr + u[0] * dm[0] + u[1] * dm[1]
    w = w + params.kappa * (g.dxp(rho) * g.dxp(dr) + g.dyp(rho) * g.dyp(dr))
    return integrate(w, g)


def dissipation_residual(s: FluidState, params: ModelParams, lam: float | None = None):
    """Evaluate ``dE/dt + sum of dissipation integrals`` for the tendency at ``s``.

    Returns ``(residual, scale)`` with ``scale = 1 + |dE/dt| + sum(D)``; the
    energy inequality states ``residual <= 0``. ``lam`` overrides the policy.
    """
    u = velocity(s, params)
    if lam is None:
        lam = compute_lambda(s, params).value
    tend = Tendency(rhs_continuity(s, lam, params), rhs_momentum(s, lam, params))
    edot = energy_rate(s, tend, params, u)
    d = dissipation_terms(s, lam, params, u)
    return edot + sum(d), 1.0 + abs(edot) + sum(d)
