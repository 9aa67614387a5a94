import math

import numpy as np
import pytest

from korteweg_fv.grid import GridSpec
from korteweg_fv.initial_data import InitExpr, project
from korteweg_fv.scheme import compute_lambda
from korteweg_fv.state import FluidState, ModelParams, VacuumBreakdown, discrete_energy
from korteweg_fv.timeint import (
    StabilityFailure,
    StepControl,
    integrate_to,
    rk4_step,
    ssprk3_step,
    stable_dt,
    step,
)

from .helpers import smooth_state


def test_stable_dt_hand_value():
    g = GridSpec(1.0, 1.0, 64, 64)
    P = ModelParams(k=1, gamma=2, kappa=1e-4, cfl=0.5)
    s = FluidState.constant(g, 1.0)
    lam = compute_lambda(s, P).value
    h = 1 / 64
    adv = h / (2 * (math.sqrt(2) / 2) + math.sqrt(2))
    kort = h**2 / (4 * math.sqrt(1e-4))
    assert adv < kort
    assert stable_dt(s, lam, P) == pytest.approx(0.5 * adv, rel=1e-14)


def test_stable_dt_advective_bound_halves_with_h():
    P = ModelParams(kappa=1e-8, cfl=1.0)
    dts = []
    for n in (16, 32):
        s = FluidState.constant(GridSpec(1.0, 1.0, n, n), 1.0, (0.5, 0.0))
        dts.append(stable_dt(s, compute_lambda(s, P).value, P))
    assert dts[1] <= 0.5 * dts[0] * (1 + 1e-14)


def test_cfl_zero_rejected():
    with pytest.raises(ValueError):
        StepControl(t_end=1.0, cfl=0.0)
    s = FluidState.constant(GridSpec(1.0, 1.0, 4, 4), 1.0)
    with pytest.raises(ValueError):
        stable_dt(s, 0.5, ModelParams(), cfl=0.0)


def test_ssprk3_local_error_order():
    rhs = lambda t, y: -y
    errs = [abs(ssprk3_step(1.0, 0.0, dt, rhs) - math.exp(-dt)) for dt in (0.1, 0.05)]
    assert errs[0] / errs[1] == pytest.approx(16.0, rel=0.05)
    errs = [abs(rk4_step(1.0, 0.0, dt, rhs) - math.exp(-dt)) for dt in (0.1, 0.05)]
    assert errs[0] / errs[1] == pytest.approx(32.0, rel=0.05)


def test_step_on_constant_state_only_moves_time():
    g = GridSpec(1.0, 1.0, 8, 8)
    s = FluidState.constant(g, 1.3)
    new = step(s, 1e-3, ModelParams(mu=0.1, eta=0.1))
    assert np.array_equal(new.rho, s.rho) and np.array_equal(new.m, s.m)
    assert new.t == pytest.approx(1e-3)


@pytest.mark.parametrize("method", ["ssprk3", "rk4"])
def test_step_conserves_mass_and_momentum(method, rng, grid_mixed):
    s = smooth_state(grid_mixed, rng)
    P = ModelParams(kappa=0.01, mu=0.01, eta=0.01)
    new = step(s, 1e-3, P, method)
    scale = grid_mixed.area * (np.abs(s.rho).max() + np.abs(s.m).max())
    assert abs(new.mass() - s.mass()) <= 1e-12 * scale
    assert np.all(np.abs(new.momentum() - s.momentum()) <= 1e-12 * scale)


def test_step_rejects_nonpositive_dt():
    s = FluidState.constant(GridSpec(1.0, 1.0, 4, 4), 1.0)
    with pytest.raises(ValueError):
        step(s, 0.0, ModelParams())


def test_zero_end_time_keeps_only_initial_snapshot():
    s = FluidState.constant(GridSpec(1.0, 1.0, 6, 6), 1.0)
    traj = integrate_to(s, StepControl(t_end=0.0), ModelParams())
    assert len(traj.snapshots) == 1 and traj.snapshots[0] is s
    assert len(traj.ledger) == 1 and traj.info["steps"] == 0


def test_constant_state_ledger_rows_identical():
    s = FluidState.constant(GridSpec(1.0, 1.0, 8, 8), 1.4, (0.2, 0.1))
    traj = integrate_to(s, StepControl(t_end=0.05), ModelParams(mu=0.02, eta=0.02))
    for name in ("mass", "momentum_x", "momentum_y", "E_h", "lambda"):
        col = traj.ledger.column(name)
        assert np.ptp(col) <= 1e-13 * (1 + abs(col[0]))
    for name in ("D_visc_dev", "D_visc_div", "D_rusanov", "semidiscrete_residual"):
        assert np.max(np.abs(traj.ledger.column(name))) <= 1e-20


def test_nsk_energy_monotone_and_dt_bounds():
    g = GridSpec(1.0, 1.0, 32, 32)
    x, y = g.cell_centers()
    rho = 1 + 0.2 * np.sin(2 * np.pi * x) * np.sin(2 * np.pi * y)
    s = FluidState(g, rho, np.zeros((2,) + g.shape))
    P = ModelParams(kappa=1e-3, mu=0.01, eta=0.01)
    ctrl = StepControl(t_end=0.05, dt_max=2e-3)
    traj = integrate_to(s, ctrl, P)
    E = traj.ledger.column("E_h")
    assert np.all(np.diff(E) <= ctrl.tol_E * E[0])
    dts = traj.ledger.column("dt")[:-1]
    assert np.all(dts <= 2e-3 * (1 + 1e-12))
    assert traj.final.t == pytest.approx(0.05, abs=1e-14)
    assert abs(traj.ledger[-1].mass - traj.ledger[0].mass) <= 1e-10 * traj.ledger[0].mass * len(traj.ledger)


def test_snapshot_times_are_hit_exactly_and_stride_respected():
    s = smooth_state(GridSpec(1.0, 1.0, 12, 12), np.random.default_rng(1))
    ctrl = StepControl(t_end=0.02, snapshot_stride=1000, snapshot_times=(0.005, 0.0123))
    traj = integrate_to(s, ctrl, ModelParams(kappa=0.01))
    assert list(traj.times) == [0.0, 0.005, 0.0123, 0.02]
    assert traj.snapshot_at(0.0123).t == 0.0123


def test_observers_see_every_snapshot():
    s = smooth_state(GridSpec(1.0, 1.0, 10, 10), np.random.default_rng(2))
    seen = []
    traj = integrate_to(s, StepControl(t_end=0.01, snapshot_stride=3), ModelParams(), observers=[lambda st, row: seen.append((st.t, row.t))])
    assert [a for a, _ in seen] == list(traj.times)
    assert all(a == b for a, b in seen)


def test_vacuum_breakdown_carries_partial_trajectory():
    expr = InitExpr(density="bubble", amp=-0.95, width=0.12, velocity="solid", A=-3.0, B=-3.0)
    s = project(expr, GridSpec(1.0, 1.0, 32, 32))
    with pytest.raises(VacuumBreakdown) as exc:
        integrate_to(s, StepControl(t_end=0.5), ModelParams(kappa=1e-4, rho_floor=0.02))
    err = exc.value
    assert err.trajectory is not None and err.trajectory.breakdown is err
    assert len(err.trajectory.ledger) >= 1
    assert np.min(err.last_state.rho) > 0.02


def test_stability_failure_after_retry_cap():
    s = smooth_state(GridSpec(1.0, 1.0, 12, 12), np.random.default_rng(3))
    P = ModelParams(kappa=0.01)
    # a negative tolerance can never be met, so every step is rejected
    ctrl = StepControl(t_end=0.01, tol_E=-1.0, max_retries=2)
    with pytest.raises(StabilityFailure) as exc:
        integrate_to(s, ctrl, P)
    assert exc.value.trajectory is not None
    assert exc.value.last_state.t == 0.0


def test_integration_is_deterministic():
    s = smooth_state(GridSpec(1.0, 1.2, 16, 12), np.random.default_rng(7))
    P = ModelParams(kappa=0.005, mu=0.01, eta=0.01)
    a = integrate_to(s, StepControl(t_end=0.02), P)
    b = integrate_to(s, StepControl(t_end=0.02), P)
    assert np.array_equal(a.final.rho, b.final.rho) and np.array_equal(a.final.m, b.final.m)
    assert a.ledger.rows == b.ledger.rows


def test_ledger_streams_to_csv(tmp_path):
    s = smooth_state(GridSpec(1.0, 1.0, 8, 8), np.random.default_rng(5))
    path = tmp_path / "ledger.csv"
    traj = integrate_to(s, StepControl(t_end=0.01), ModelParams(), ledger_path=path)
    lines = path.read_text().strip().splitlines()
    assert len(lines) == len(traj.ledger) + 1
    assert discrete_energy(traj.final, traj.params) == traj.ledger[-1].E_h
