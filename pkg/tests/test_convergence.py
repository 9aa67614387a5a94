import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from korteweg_fv.convergence import (
    RefinementStudy,
    cauchy_table,
    lambda_audit,
    restrict,
    restrict_aligned,
    run_study,
    study_report,
    uniform_bounds_audit,
)
from korteweg_fv.grid import GridSpec, integrate
from korteweg_fv.initial_data import InitExpr
from korteweg_fv.state import ModelParams


def test_restrict_hand_values():
    f = np.array([[0.0, 0.0], [2.0, 2.0]])
    assert restrict(f, 2)[0, 0] == 1.0
    assert np.all(restrict(np.full((6, 4), 3.5), 2) == 3.5)
    with pytest.raises(ValueError):
        restrict(np.zeros((6, 4)), 4)
    with pytest.raises(ValueError):
        restrict(np.zeros((4, 4)), 1.5)


def test_restrict_aligned_hand_value():
    f = np.zeros((4, 4))
    f[0, 0] = 16.0
    # coarse cell 0 covers fine cell 0 fully; cells 1 and 3 halfway
    assert restrict_aligned(f, 2)[0, 0] == pytest.approx(4.0)
    g = np.zeros((4, 4))
    g[1, 0] = 16.0
    assert restrict_aligned(g, 2)[0, 0] == pytest.approx(2.0)
    assert restrict_aligned(g, 2)[1, 0] == pytest.approx(2.0)


fields = st.tuples(st.integers(1, 5), st.integers(1, 5)).flatmap(
    lambda s: arrays(np.float64, (2 * s[0], 2 * s[1]), elements=st.floats(-50, 50))
)


@given(fields)
def test_restrictions_preserve_mass_and_contract(f):
    M, N = f.shape
    fine = GridSpec(1.0, 1.0, M, N) if M > 2 and N > 2 else None
    for op in (restrict, restrict_aligned):
        c = op(f, 2)
        assert np.sum(c) * 4 == pytest.approx(np.sum(f), abs=1e-10 * (1 + np.abs(f).sum()))
        assert 4 * np.sum(c**2) <= np.sum(f**2) * (1 + 1e-12) + 1e-12
    if fine is not None:
        coarse = GridSpec(1.0, 1.0, M // 2, N // 2) if M >= 6 and N >= 6 else None
        if coarse is not None:
            assert integrate(restrict(f, 2), coarse) == pytest.approx(integrate(f, fine), abs=1e-10 * (1 + np.abs(f).sum()))


def test_restrict_aligned_matches_sampled_smooth_field():
    n = 64
    x = np.arange(2 * n) / (2 * n)
    xc = np.arange(n) / n
    f = np.cos(2 * np.pi * x)[:, None] * np.ones((1, 2 * n))
    c = restrict_aligned(f, 2)[:, 0]
    b = restrict(f, 2)[:, 0]
    # the aligned restriction is centered on the coarse centers; the block mean is shifted by h/2
    assert np.max(np.abs(c - np.cos(2 * np.pi * xc))) < 1e-3
    assert np.max(np.abs(b - np.cos(2 * np.pi * xc))) > 1e-2


def test_study_validation():
    expr = InitExpr()
    P = ModelParams()
    with pytest.raises(ValueError):
        RefinementStudy(expr, P, 1.0, 1.0, ((8, 8), (16, 12)), 0.1)
    with pytest.raises(ValueError):
        RefinementStudy(expr, P, 1.0, 1.0, ((8, 8),), 0.1)
    with pytest.raises(ValueError):
        RefinementStudy(expr, P, 2.0, 1.0, ((8, 8), (16, 16)), 0.1)
    with pytest.raises(ValueError):
        RefinementStudy(expr, P, 1.0, 1.0, ((8, 8), (16, 16)), 0.1, compare_times=(0.2,))
    st_ = RefinementStudy.doubling(expr, P, 8, 4, 3, 0.1, compare_times=(0.05,))
    assert st_.levels == ((8, 4), (16, 8), (32, 16))
    assert st_.compare_times == (0.05, 0.1)


def test_constant_state_study():
    P = ModelParams(k=1.0, gamma=2.0, mu=0.01, eta=0.01)
    study = RefinementStudy.doubling(InitExpr(rho_bar=1.2), P, 8, 8, 3, 0.02, compare_times=(0.01,))
    results = run_study(study)
    table = cauchy_table(study, results)
    for row in table["rows"]:
        for c in table["columns"]:
            assert row[c] <= 1e-13
    assert table["monotone"]
    bounds = uniform_bounds_audit(results)
    E = 1.2**2
    for row in bounds["rows"]:
        assert row["sup_E"] == pytest.approx(E, rel=1e-13)
        assert row["bv"] == pytest.approx(E, rel=1e-13)
        assert row["int_D_rusanov"] == 0.0 and row["int_D_visc_dev"] == 0.0
    assert bounds["ok"]
    audit = lambda_audit(results)
    assert audit["lambda_within_10pct"]
    lh = [r["lambda_h"] for r in audit["rows"]]
    assert lh[1] == pytest.approx(lh[0] / 2, rel=1e-12) and lh[2] == pytest.approx(lh[1] / 2, rel=1e-12)


def test_smooth_ek_study_report(tmp_path):
    P = ModelParams(kappa=1e-3)
    expr = InitExpr(density="perturbed", a=0.2, p=1, q=1)
    study = RefinementStudy.doubling(expr, P, 8, 8, 3, 0.02, compare_times=(0.01,))
    results = run_study(study, workers=2)
    rep = study_report(study, results, tmp_path / "study")
    assert rep["cauchy"]["weak_only"] and "u_L2" not in rep["cauchy"]["columns"]
    for row in rep["bounds"]["rows"]:
        assert row["int_D_visc_dev"] == 0.0 and row["int_D_visc_div"] == 0.0
    assert (tmp_path / "study.json").exists()
    assert "no order of convergence" in (tmp_path / "study.txt").read_text()


def test_cauchy_table_reports_missing_snapshots():
    P = ModelParams()
    study = RefinementStudy.doubling(InitExpr(), P, 8, 8, 2, 0.01)
    results = run_study(study)
    other = RefinementStudy.doubling(InitExpr(), P, 8, 8, 2, 0.01, compare_times=(0.005,))
    with pytest.raises(KeyError):
        cauchy_table(other, results)
