"""Explicit Runge-Kutta integration of the semidiscrete system.

The scheme itself is only semidiscrete; time stepping is SSPRK3 by default
(convex combinations of forward-Euler stages) with classical RK4 available
for accuracy comparisons. Each stage recomputes lambda from its own state.

The step size formula is a heuristic. The guarantee of non-increasing
discrete energy is the monitor in :func:`integrate_to`, which halves ``dt``
and retries a step whenever the energy grows by more than ``tol_E``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .diagnostics import EnergyLedger, record
from .scheme import assemble_rhs, compute_lambda
from .state import (
    FluidState,
    ModelParams,
    VacuumBreakdown,
    check_density,
    discrete_energy,
    sound_speed,
    velocity,
)

__all__ = [
    "StepControl",
    "StabilityFailure",
    "Trajectory",
    "stable_dt",
    "ssprk3_step",
    "rk4_step",
    "step",
    "integrate_to",
]


class StabilityFailure(RuntimeError):
    """The energy monitor rejected a step more often than the retry cap allows."""

    def __init__(self, msg, last_state=None, trajectory=None):
        super().__init__(msg)
        self.last_state = last_state
        self.trajectory = trajectory


@dataclass(frozen=True)
class StepControl:
    t_end: float
    cfl: float | None = None
    dt_max: float = math.inf
    method: str = "ssprk3"
    snapshot_stride: int = 1
    snapshot_times: tuple = ()
    tol_E: float = 1e-8
    max_retries: int = 12
    korteweg_dt_constant: float = 4.0
    deterministic: bool = True

    def __post_init__(self):
        if self.cfl is not None and not 0 < self.cfl <= 1:
            raise ValueError(f"cfl must lie in (0, 1], got {self.cfl}")
        if self.method not in ("ssprk3", "rk4"):
            raise ValueError(f"unknown method {self.method!r}")
        if not self.dt_max > 0:
            raise ValueError("dt_max must be positive")
        if self.snapshot_stride < 1:
            raise ValueError("snapshot_stride must be >= 1")
        if self.t_end < 0:
            raise ValueError("t_end must be >= 0")
        object.__setattr__(self, "snapshot_times", tuple(sorted(float(t) for t in self.snapshot_times)))


@dataclass
class Trajectory:
    """Stored snapshots plus the per-step ledger of one run."""

    snapshots: list
    ledger: EnergyLedger
    params: ModelParams
    control: StepControl | None = None
    breakdown: VacuumBreakdown | None = None
    info: dict = field(default_factory=dict)

    def __post_init__(self):
        times = self.times
        if np.any(np.diff(times) <= 0):
            raise ValueError("snapshot times must be strictly increasing")
        grids = {s.grid for s in self.snapshots}
        if len(grids) > 1:
            raise ValueError("snapshots live on different grids")

    @property
    def grid(self):
        return self.snapshots[0].grid

    @property
    def times(self) -> np.ndarray:
        return np.array([s.t for s in self.snapshots])

    @property
    def final(self) -> FluidState:
        return self.snapshots[-1]

    def index_of(self, t: float, rtol: float = 1e-9) -> int:
        times = self.times
        k = int(np.argmin(np.abs(times - t)))
        if abs(times[k] - t) > rtol * max(1.0, abs(t)):
            raise KeyError(f"no snapshot at t={t}; stored times span [{times[0]}, {times[-1]}]")
        return k

    def snapshot_at(self, t: float) -> FluidState:
        return self.snapshots[self.index_of(t)]

    def energies(self) -> np.ndarray:
        """Ledger energy at each snapshot time."""
        return np.array([self.ledger.energy_at(s.t) for s in self.snapshots])

    def max_dt(self) -> float:
        dts = self.ledger.column("dt")
        dts = dts[dts > 0]
        return float(dts.max()) if dts.size else 0.0


def stable_dt(s: FluidState, lam: float, params: ModelParams, cfl=None, c_K: float = 4.0) -> float:
    """Heuristic explicit step: advective, viscous and capillary limits.

    ``cfl * min(h/(2 lam + vmax), h^2/(4 (2mu + eta)/rho_min + eps), h^2/(c_K sqrt(kappa rho_max)))``
    with ``h = min(hx, hy)`` and ``vmax = max|u| + max sqrt(p')``.
    """
    g = s.grid
    cfl = params.cfl if cfl is None else cfl
    if not 0 < cfl <= 1:
        raise ValueError(f"cfl must lie in (0, 1], got {cfl}")
    u = velocity(s, params)
    hmin = min(g.hx, g.hy)
    vmax = float(np.max(np.sqrt(u[0] ** 2 + u[1] ** 2)) + np.max(sound_speed(s.rho, params)))
    eps = np.finfo(float).tiny
    adv = hmin / (2.0 * lam + vmax)
    visc = hmin**2 / (4.0 * (2.0 * params.mu + params.eta) / float(np.min(s.rho)) + eps)
    kort = hmin**2 / (c_K * math.sqrt(params.kappa * float(np.max(s.rho))))
    return cfl * min(adv, visc, kort)


def ssprk3_step(y, t, dt, rhs):
    """One Shu-Osher SSPRK3 step for ``y' = rhs(t, y)`` on array-like ``y``."""
    y1 = y + dt * rhs(t, y)
    y2 = 0.75 * y + 0.25 * (y1 + dt * rhs(t + dt, y1))
    return y / 3.0 + 2.0 / 3.0 * (y2 + dt * rhs(t + 0.5 * dt, y2))


def rk4_step(y, t, dt, rhs):
    k1 = rhs(t, y)
    k2 = rhs(t + 0.5 * dt, y + 0.5 * dt * k1)
    k3 = rhs(t + 0.5 * dt, y + 0.5 * dt * k2)
    k4 = rhs(t + dt, y + dt * k3)
    return y + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


_STEPPERS = {"ssprk3": ssprk3_step, "rk4": rk4_step}


def _pack(s: FluidState) -> np.ndarray:
    return np.concatenate([s.rho[None], s.m])


def step(s: FluidState, dt: float, params: ModelParams, method: str = "ssprk3") -> FluidState:
    """Advance ``s`` by ``dt``; every stage must keep all densities above the floor."""
    if not dt > 0:
        raise ValueError("dt must be positive")
    grid = s.grid
    floor = params.floor_for(s.rho)

    def rhs(t, y):
        stage = FluidState(grid, y[0], y[1:], t)
        check_density(stage, floor)
        tend, _ = assemble_rhs(stage, params)
        return np.concatenate([tend.d_rho[None], tend.d_m])

    y = _STEPPERS[method](_pack(s), s.t, dt, rhs)
    if not np.all(np.isfinite(y)):
        raise VacuumBreakdown(np.unravel_index(np.argmin(y[0]), grid.shape), s.t + dt, np.nan, floor, s)
    new = FluidState(grid, y[0], y[1:], s.t + dt)
    check_density(new, floor)
    return new


def integrate_to(s0: FluidState, ctrl: StepControl, params: ModelParams, observers=(), ledger_path=None):
    """Run adaptive steps from ``s0`` to ``ctrl.t_end``.

    One ledger row is recorded per accepted step (for the state the step
    starts from) plus one for the final state. Snapshots are stored every
    ``snapshot_stride`` steps, at every time in ``snapshot_times`` (steps are
    shortened to land on them) and at the end. Observers are called as
    ``obs(state, row)`` whenever a snapshot is stored.

    Raises :class:`VacuumBreakdown` or :class:`StabilityFailure`; both carry
    the partial trajectory in ``.trajectory``.
    """
    if params.rho_floor is None:
        params = replace(params, rho_floor=params.floor_for(s0.rho))
    check_density(s0, params.rho_floor)

    ledger = EnergyLedger(path=ledger_path)
    snapshots = []
    traj = Trajectory([s0], ledger, params, ctrl)
    traj.snapshots = snapshots
    targets = [t for t in ctrl.snapshot_times if s0.t < t < ctrl.t_end]
    E_old = discrete_energy(s0, params)
    tol_E = ctrl.tol_E * abs(E_old)
    t_end = ctrl.t_end
    time_eps = 1e-12 * max(1.0, abs(t_end))

    def emit(state, row):
        snapshots.append(state)
        for obs in observers:
            obs(state, row)

    state = s0
    n = 0
    pending = True
    try:
        while state.t < t_end - time_eps:
            tend, rep = assemble_rhs(state, params)
            next_stop = min([t for t in targets if t > state.t + time_eps] + [t_end])
            dt = min(stable_dt(state, rep.value, params, ctrl.cfl, ctrl.korteweg_dt_constant), ctrl.dt_max)
            if dt >= next_stop - state.t - time_eps:
                dt = next_stop - state.t
            for _ in range(ctrl.max_retries + 1):
                new = step(state, dt, params, ctrl.method)
                E_new = discrete_energy(new, params)
                if E_new - E_old <= tol_E:
                    break
                dt *= 0.5
            else:
                raise StabilityFailure(
                    f"energy increased by {E_new - E_old:.3e} > tol_E={tol_E:.3e} at t={state.t:.6g} "
                    f"after {ctrl.max_retries} step halvings",
                    last_state=state,
                )
            at_target = abs(new.t - next_stop) <= time_eps
            if at_target:
                new = new.replace(t=next_stop)
            row = record(state, tend, rep, dt, params)
            ledger.append(row)
            if pending:
                emit(state, row)
            n += 1
            state, E_old = new, E_new
            pending = n % ctrl.snapshot_stride == 0 or at_target
        tend, rep = assemble_rhs(state, params)
        row = record(state, tend, rep, 0.0, params)
        ledger.append(row)
        emit(state, row)
    except (VacuumBreakdown, StabilityFailure) as exc:
        if exc.last_state is None:
            exc.last_state = state
        if isinstance(exc, VacuumBreakdown):
            traj.breakdown = exc
        exc.trajectory = traj
        raise
    finally:
        ledger.close()
    traj.info["steps"] = n
    return traj
