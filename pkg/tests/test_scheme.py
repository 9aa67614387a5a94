import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from korteweg_fv.grid import GridSpec, integrate
from korteweg_fv.scheme import (
    Tendency,
    assemble_rhs,
    compute_lambda,
    convective_momentum,
    dissipation_residual,
    dissipation_terms,
    energy_rate,
    korteweg_momentum,
    rhs_continuity,
    rhs_momentum,
    viscous_momentum,
)
from korteweg_fv.state import FluidState, ModelParams, discrete_energy, velocity

from . import oracles
from .helpers import rough_state, smooth_state


def test_lambda_hand_values():
    g = GridSpec(1.0, 1.0, 6, 6)
    rep = compute_lambda(FluidState.constant(g, 1.0), ModelParams(k=1, gamma=2))
    assert rep.value == pytest.approx(0.5 * math.sqrt(2), abs=1e-16)
    assert rep.value == 0.5 * rep.max_speed
    rho = np.ones(g.shape)
    rho[3, 3] = 4.0
    rep = compute_lambda(FluidState(g, rho, np.zeros((2,) + g.shape)), ModelParams(k=1, gamma=2))
    assert rep.value == pytest.approx(0.5 * math.sqrt(8), abs=1e-15)
    assert rep.argmax_cell == (3, 3)
    eps = 1e-3
    rep = compute_lambda(FluidState.constant(g, 1.0), ModelParams(k=2.5, gamma=1 + eps))
    assert rep.value == pytest.approx(0.5 * math.sqrt(2.5 * (1 + eps)), rel=1e-14)


def test_fixed_lambda_policy_keeps_diagnostics():
    g = GridSpec(1.0, 1.0, 6, 6)
    rep = compute_lambda(FluidState.constant(g, 1.0), ModelParams(lambda_fixed=0.3))
    assert rep.value == 0.3 and rep.policy == "fixed"
    assert rep.max_speed == pytest.approx(math.sqrt(2))


@pytest.mark.parametrize("mu,eta", [(0.0, 0.0), (0.013, 0.021)])
def test_rhs_matches_loop_transcription(mu, eta, rng):
    g = GridSpec(1.0, 1.3, 7, 6)
    s = rough_state(g, rng)
    P = ModelParams(k=1.3, gamma=1.7, kappa=0.02, mu=mu, eta=eta)
    lam = 0.37
    ref = oracles.scheme_rhs(s.rho, s.m[0], s.m[1], g.hx, g.hy, lam, P.k, P.gamma, P.kappa, mu, eta)
    np.testing.assert_allclose(rhs_continuity(s, lam, P), ref[0], rtol=1e-12, atol=1e-10)
    dm = rhs_momentum(s, lam, P)
    np.testing.assert_allclose(dm[0], ref[1], rtol=1e-12, atol=1e-9)
    np.testing.assert_allclose(dm[1], ref[2], rtol=1e-12, atol=1e-9)


def test_constant_state_is_steady():
    g = GridSpec(1.0, 1.0, 8, 8)
    P = ModelParams(mu=0.1, eta=0.1)
    tend, rep = assemble_rhs(FluidState.constant(g, 1.7, (0.3, -0.2)), P)
    assert np.max(np.abs(tend.d_rho)) < 1e-13 and np.max(np.abs(tend.d_m)) < 1e-13
    tend, rep = assemble_rhs(FluidState.constant(g, 2.0), ModelParams(k=1, gamma=2))
    assert np.all(tend.d_rho == 0) and np.all(tend.d_m == 0)
    assert rep.value == pytest.approx(0.5 * math.sqrt(4.0))


def test_pure_central_advection():
    g = GridSpec(1.0, 1.0, 10, 8)
    rng = np.random.default_rng(3)
    rho = 1 + 0.2 * rng.random(g.shape)
    s = FluidState(g, rho, np.stack([rho, 0 * rho]))
    np.testing.assert_allclose(rhs_continuity(s, 0.0, ModelParams()), -g.dxc(rho), atol=1e-13)


def test_x_only_data_has_no_y_momentum_tendency():
    g = GridSpec(1.0, 1.0, 12, 9)
    rng = np.random.default_rng(4)
    rho = np.repeat(1 + 0.3 * rng.random((g.M, 1)), g.N, axis=1)
    mx = np.repeat(rng.standard_normal((g.M, 1)), g.N, axis=1)
    s = FluidState(g, rho, np.stack([mx, 0 * mx]))
    P = ModelParams(kappa=0.05, mu=0.02, eta=0.03)
    tend, _ = assemble_rhs(s, P)
    assert np.all(tend.d_m[1] == 0)


def test_viscous_addend_vanishes_in_inviscid_mode(rng, grid_mixed):
    s = rough_state(grid_mixed, rng)
    assert np.all(viscous_momentum(s, ModelParams()) == 0)


def test_tendency_is_sum_of_addends(rng, grid_mixed):
    s = rough_state(grid_mixed, rng)
    P = ModelParams(mu=0.01, eta=0.02, kappa=0.01)
    tend, rep = assemble_rhs(s, P)
    parts = convective_momentum(s, rep.value, P) + viscous_momentum(s, P) + korteweg_momentum(s, P)
    np.testing.assert_allclose(tend.d_m, parts, rtol=1e-14, atol=1e-12)


def test_shift_equivariance(rng, grid_mixed):
    s = rough_state(grid_mixed, rng)
    P = ModelParams(mu=0.01, eta=0.02, kappa=0.01)
    t0, _ = assemble_rhs(s, P)
    t1, _ = assemble_rhs(s.shifted(2, -3), P)
    roll = lambda f: np.roll(f, (-2, 3), axis=(-2, -1))
    assert np.array_equal(t1.d_rho, roll(t0.d_rho))
    assert np.array_equal(t1.d_m, roll(t0.d_m))


def test_dissipation_terms_match_loop_oracle():
    g = GridSpec(1.0, 1.0, 16, 12)
    x, y = g.cell_centers()
    rho = 1 + 0.2 * np.cos(2 * np.pi * x)
    u = np.stack([np.sin(2 * np.pi * y / g.Ly), 0.3 * np.cos(2 * np.pi * (x + y))])
    s = FluidState(g, rho, rho * u)
    P = ModelParams(mu=0.7, eta=0.3, kappa=0.1)
    dev2, div = oracles.strain_loop(u[0], u[1], g.hx, g.hy)
    d_dev, d_div, d_rus = dissipation_terms(s, 0.4, P)
    assert d_dev == pytest.approx(2 * 0.7 * np.sum(dev2) * g.cell_area, rel=1e-12)
    assert d_div == pytest.approx(0.3 * np.sum(div**2) * g.cell_area, rel=1e-12)
    assert d_rus == pytest.approx(0.1 * 0.4 * g.h * np.sum(g.lap(rho) ** 2) * g.cell_area, rel=1e-12)


@pytest.mark.parametrize("mu", [0.0, 0.02])
def test_energy_rate_matches_difference_quotient(mu, rng, grid_mixed):
    s = smooth_state(grid_mixed, rng)
    P = ModelParams(kappa=0.01, mu=mu, eta=mu)
    tend, _ = assemble_rhs(s, P)
    rate = energy_rate(s, tend, P)
    eps = 1e-5
    E = lambda e: discrete_energy(s.replace(rho=s.rho + e * tend.d_rho, m=s.m + e * tend.d_m), P)
    fd = (E(eps) - E(-eps)) / (2 * eps)
    assert rate == pytest.approx(fd, rel=1e-6, abs=1e-9)


def test_energy_rate_is_zero_for_zero_tendency(rng, grid_mixed):
    s = rough_state(grid_mixed, rng)
    z = Tendency(np.zeros(grid_mixed.shape), np.zeros((2,) + grid_mixed.shape))
    assert energy_rate(s, z, ModelParams()) == 0.0


shape_st = st.tuples(st.integers(3, 14), st.integers(3, 14))


@given(shape_st, st.integers(0, 2**32 - 1), st.sampled_from([(0.0, 0.0), (0.01, 0.01), (0.05, 0.2)]))
def test_conservation_property(shape, seed, visc):
    g = GridSpec(1.0, 1.7, *shape)
    rng = np.random.default_rng(seed)
    s = rough_state(g, rng, amp=2.0, vel=3.0)
    P = ModelParams(kappa=0.03, mu=visc[0], eta=visc[1])
    tend, _ = assemble_rhs(s, P)
    MN = g.M * g.N
    assert abs(np.sum(tend.d_rho)) <= 1e-12 * MN * np.abs(tend.d_rho).max()
    for c in range(2):
        assert abs(np.sum(tend.d_m[c])) <= 1e-12 * MN * np.abs(tend.d_m[c]).max()


@given(shape_st, st.integers(0, 2**32 - 1), st.sampled_from([(0.0, 0.0), (0.01, 0.01), (0.3, 0.05)]))
def test_semidiscrete_dissipation_property(shape, seed, visc):
    g = GridSpec(1.3, 1.0, *shape)
    rng = np.random.default_rng(seed)
    s = rough_state(g, rng, amp=1.5, vel=2.0)
    P = ModelParams(kappa=0.02, mu=visc[0], eta=visc[1], gamma=1.4)
    res, scale = dissipation_residual(s, P)
    assert res <= 1e-10 * scale


@given(st.integers(0, 2**32 - 1))
def test_lambda_monotone_in_speed_and_density(seed):
    g = GridSpec(1.0, 1.0, 6, 5)
    rng = np.random.default_rng(seed)
    s = rough_state(g, rng)
    P = ModelParams()
    lam = compute_lambda(s, P).value
    i, j = rng.integers(0, 6), rng.integers(0, 5)
    m = s.m.copy()
    m[:, i, j] *= 1.5
    assert compute_lambda(s.replace(m=m), P).value >= lam
    rho = s.rho.copy()
    rho[i, j] *= 1.5
    m = s.m.copy()
    m[:, i, j] *= 1.5  # same velocity, denser cell
    assert compute_lambda(s.replace(rho=rho, m=m), P).value >= lam


def test_printed_viscous_sign_is_dissipative(rng):
    """The minus sign inside the shear group is what makes the viscous work negative."""
    g = GridSpec(1.0, 1.0, 10, 10)
    s = smooth_state(g, rng, vel=1.0)
    P = ModelParams(mu=0.1, eta=0.0)
    u = velocity(s, P)
    work = integrate(np.sum(u * viscous_momentum(s, P, u), axis=0), g)
    d_dev, _, _ = dissipation_terms(s, 0.0, P, u)
    assert work == pytest.approx(-d_dev, rel=1e-12)
