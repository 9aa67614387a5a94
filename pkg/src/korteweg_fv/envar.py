"""Energy-variational residuals evaluated on computed trajectories.

Three families of checks live here:

* the regularity weight ``K(phi)``,
* the variational inequality residual between two snapshot times, built
  from five integral groups (bracket, transport, viscous, Korteweg, defect),
* the fully discrete weak forms of the continuity and momentum equations,
  which hold exactly for the semidiscrete solution, so that on a computed
  trajectory only the time quadrature (trapezoid rule) leaves a residual.

Test functions are tensor trigonometric modes times a scalar time profile,
so every derivative needed is available in closed form.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
from scipy.integrate import cumulative_trapezoid, trapezoid

from .grid import GridSpec, integrate, shift
from .scheme import compute_lambda, strain_parts
from .state import FluidState, ModelParams, discrete_energy, eta_tilde, pressure, velocity

__all__ = [
    "TimeProfile",
    "TrigMode",
    "TestFunctionPair",
    "catalog",
    "check_test_function",
    "regularity_weight",
    "envar_terms",
    "envar_residual",
    "envar_tolerance",
    "EnvarRecord",
    "evaluate_catalog",
    "discrete_weak_residual_continuity",
    "discrete_weak_residual_momentum",
    "with_energy_perturbed",
    "write_report",
]

GROUPS = ("bracket", "transport", "viscous", "korteweg", "defect")


@dataclass(frozen=True)
class TimeProfile:
    """Scalar time factor ``T(t)``.

    ``one``: T = 1. ``linear``: T = t. ``cutoff``: T = cos(pi t / (2 t_c))**2
    for t < t_c and 0 afterwards, which is C1 with T(0) = 1, T'(0) = 0.
    """

    kind: str = "one"
    t_c: float = math.inf

    def __post_init__(self):
        if self.kind not in ("one", "linear", "cutoff"):
            raise ValueError(f"unknown time profile {self.kind!r}")
        if self.kind == "cutoff" and not (0 < self.t_c < math.inf):
            raise ValueError("cutoff profile needs a finite t_c > 0")

    def value(self, t: float) -> float:
        if self.kind == "one":
            return 1.0
        if self.kind == "linear":
            return float(t)
        if t >= self.t_c:
            return 0.0
        return math.cos(0.5 * math.pi * t / self.t_c) ** 2

    def derivative(self, t: float) -> float:
        if self.kind == "one":
            return 0.0
        if self.kind == "linear":
            return 1.0
        if t >= self.t_c:
            return 0.0
        w = 0.5 * math.pi / self.t_c
        return -w * math.sin(2.0 * w * t)

    def vanishes_after(self, t: float) -> bool:
        return self.kind == "cutoff" and self.t_c <= t


@dataclass(frozen=True)
class TrigMode:
    """``amp * cos(kx x + ax) * cos(ky y + ay)`` with angular wavenumbers ``kx, ky``."""

    amp: float
    kx: float
    ky: float
    ax: float = 0.0
    ay: float = 0.0

    @classmethod
    def on_torus(cls, amp, p, q, Lx, Ly, ax=0.0, ay=0.0):
        return cls(amp, 2.0 * math.pi * p / Lx, 2.0 * math.pi * q / Ly, ax, ay)

    def _parts(self, x, y):
        X = self.kx * x + self.ax
        Y = self.ky * y + self.ay
        return np.cos(X), np.sin(X), np.cos(Y), np.sin(Y)

    def value(self, x, y):
        cx, _, cy, _ = self._parts(x, y)
        return self.amp * cx * cy

    def grad(self, x, y):
        cx, sx, cy, sy = self._parts(x, y)
        return np.stack([-self.amp * self.kx * sx * cy, -self.amp * self.ky * cx * sy])

    def hessian(self, x, y):
        """Second derivatives ``(f_xx, f_xy, f_yy)``."""
        cx, sx, cy, sy = self._parts(x, y)
        a = self.amp
        return (
            -a * self.kx**2 * cx * cy,
            a * self.kx * self.ky * sx * sy,
            -a * self.ky**2 * cx * cy,
        )


def _zeros(x):
    return np.zeros_like(np.asarray(x, dtype=float))


@dataclass(frozen=True)
class TestFunctionPair:
    """Scalar ``psi`` and vector ``phi``, each a trig mode times a time profile.

    Any of ``psi``, ``phi_x``, ``phi_y`` may be ``None`` (identically zero).
    Vector outputs carry the component on the leading axis; ``grad_phi`` has
    shape ``(2, 2, ...)`` with ``grad_phi[i, j] = d phi_i / d x_j``.
    """

    __test__ = False  # not a pytest class despite the name

    name: str
    psi: TrigMode | None = None
    phi_x: TrigMode | None = None
    phi_y: TrigMode | None = None
    time: TimeProfile = field(default_factory=TimeProfile)

    @property
    def is_zero(self) -> bool:
        return self.psi is None and self.phi_x is None and self.phi_y is None

    @property
    def has_psi(self) -> bool:
        return self.psi is not None

    @property
    def has_phi(self) -> bool:
        return self.phi_x is not None or self.phi_y is not None

    def vanishes_after(self, t: float) -> bool:
        return self.is_zero or self.time.vanishes_after(t)

    # scalar part

    def psi_value(self, t, x, y):
        if self.psi is None:
            return _zeros(x)
        return self.time.value(t) * self.psi.value(x, y)

    def psi_t(self, t, x, y):
        if self.psi is None:
            return _zeros(x)
        return self.time.derivative(t) * self.psi.value(x, y)

    def grad_psi(self, t, x, y):
        if self.psi is None:
            return np.stack([_zeros(x), _zeros(x)])
        return self.time.value(t) * self.psi.grad(x, y)

    # vector part

    def _comp(self, mode, x, y):
        return _zeros(x) if mode is None else mode.value(x, y)

    def _comp_grad(self, mode, x, y):
        return np.stack([_zeros(x), _zeros(x)]) if mode is None else mode.grad(x, y)

    def _comp_hess(self, mode, x, y):
        if mode is None:
            z = _zeros(x)
            return z, z, z
        return mode.hessian(x, y)

    def phi(self, t, x, y):
        return self.time.value(t) * np.stack([self._comp(self.phi_x, x, y), self._comp(self.phi_y, x, y)])

    def phi_t(self, t, x, y):
        return self.time.derivative(t) * np.stack([self._comp(self.phi_x, x, y), self._comp(self.phi_y, x, y)])

    def grad_phi(self, t, x, y):
        return self.time.value(t) * np.stack([self._comp_grad(self.phi_x, x, y), self._comp_grad(self.phi_y, x, y)])

    def div_phi(self, t, x, y):
        g = self.grad_phi(t, x, y)
        return g[0, 0] + g[1, 1]

    def grad_div_phi(self, t, x, y):
        uxx, uxy, _ = self._comp_hess(self.phi_x, x, y)
        _, vxy, vyy = self._comp_hess(self.phi_y, x, y)
        return self.time.value(t) * np.stack([uxx + vxy, uxy + vyy])


def catalog(Lx: float = 1.0, Ly: float = 1.0, t_cut: float = 0.08) -> list[TestFunctionPair]:
    """Built-in test-function pairs on the ``Lx x Ly`` torus.

    Covers the zero pair, scalar-only and vector-only pairs, compressive,
    transverse, exactly solenoidal and exactly irrotational vector fields,
    spatially constant fields, a second harmonic, and the three time
    profiles (cutoff ones vanish from ``t_cut`` on). Phases are generic so
    that no entry is orthogonal to data with reflection symmetries.
    """
    T = lambda amp, p, q, ax=0.0, ay=0.0: TrigMode.on_torus(amp, p, q, Lx, Ly, ax, ay)
    lin = TimeProfile("linear")
    cut = TimeProfile("cutoff", t_cut)
    half_pi = 0.5 * math.pi
    # stream function c cos(X + a) cos(Y + b); its rotated and plain gradients
    c, a, b = 0.2 / (2.0 * math.pi), 0.3, 0.8
    kx, ky = 2.0 * math.pi / Lx, 2.0 * math.pi / Ly
    return [
        TestFunctionPair("zero"),
        TestFunctionPair("psi_const", psi=T(1.0, 0, 0)),
        TestFunctionPair("psi_11", psi=T(0.5, 1, 1, 0.3, 0.5)),
        TestFunctionPair("psi_20_linear", psi=T(0.5, 2, 0, 0.4), time=lin),
        TestFunctionPair("phi_const", phi_x=T(0.5, 0, 0), phi_y=T(-0.3, 0, 0)),
        TestFunctionPair("phi_compress_x", phi_x=T(0.2, 1, 1, -half_pi + 0.2, 0.1)),
        TestFunctionPair("phi_transverse", phi_y=T(0.2, 1, 1, 0.4, 0.9)),
        TestFunctionPair(
            "phi_solenoidal",
            phi_x=T(-c * ky, 1, 1, a, b - half_pi),
            phi_y=T(c * kx, 1, 1, a - half_pi, b),
        ),
        TestFunctionPair(
            "phi_gradient",
            phi_x=T(-c * kx, 1, 1, a - half_pi, b),
            phi_y=T(-c * ky, 1, 1, a, b - half_pi),
        ),
        TestFunctionPair("phi_22_linear", phi_x=T(0.1, 2, 2, 0.2, 0.5), phi_y=T(0.1, 2, 0, 0.7), time=lin),
        TestFunctionPair("mixed", psi=T(0.3, 1, 1, 0.6, 0.2), phi_x=T(0.15, 1, 1, 0.4, 1.0), phi_y=T(0.15, 2, 2, 0.1, 1.1)),
        TestFunctionPair("psi_cutoff", psi=T(0.5, 2, 2, 0.3, 0.2), time=cut),
        TestFunctionPair("phi_cutoff", phi_x=T(0.2, 1, 1, 0.1, 0.6), phi_y=T(0.2, 1, 1, 0.5, 0.9), time=cut),
        TestFunctionPair("psi_11_cutoff", psi=T(0.5, 1, 1, 0.9, 0.2), time=cut),
        TestFunctionPair(
            "phi_gradient_cutoff",
            phi_x=T(-c * kx, 1, 1, a - half_pi, b),
            phi_y=T(-c * ky, 1, 1, a, b - half_pi),
            time=cut,
        ),
        TestFunctionPair(
            "mixed_cutoff", psi=T(0.4, 1, 1, 0.2, 0.7), phi_x=T(0.2, 1, 1, 0.3, 0.4), phi_y=T(-0.1, 0, 2, 0.0, 0.3), time=cut
        ),
    ]


def check_test_function(tf: TestFunctionPair, Lx: float, Ly: float, n: int = 16, seed: int = 0, eps: float = 1e-5):
    """Sample periodicity and finite-difference consistency of every derivative.

    Returns the largest deviation found; periodicity errors are absolute,
    derivative errors relative to the function scale.
    """
    rng = np.random.default_rng(seed)
    x = rng.uniform(0, Lx, n)
    y = rng.uniform(0, Ly, n)
    t = rng.uniform(0.0, 0.05, n)
    worst = 0.0
    for k in range(n):
        ti, xi, yi = t[k], x[k], y[k]
        for f in (tf.psi_value, tf.phi):
            base = f(ti, xi, yi)
            for xs, ys in ((xi + Lx, yi), (xi, yi + Ly), (xi - 2 * Lx, yi + 3 * Ly)):
                worst = max(worst, float(np.max(np.abs(f(ti, xs, ys) - base))))

        def cd(f, dt=0.0, dx=0.0, dy=0.0):
            return (f(ti + dt, xi + dx, yi + dy) - f(ti - dt, xi - dx, yi - dy)) / (2 * eps)

        checks = [
            (tf.psi_t(ti, xi, yi), cd(tf.psi_value, dt=eps)),
            (tf.grad_psi(ti, xi, yi)[0], cd(tf.psi_value, dx=eps)),
            (tf.grad_psi(ti, xi, yi)[1], cd(tf.psi_value, dy=eps)),
            (tf.phi_t(ti, xi, yi), cd(tf.phi, dt=eps)),
            (tf.grad_phi(ti, xi, yi)[:, 0], cd(tf.phi, dx=eps)),
            (tf.grad_phi(ti, xi, yi)[:, 1], cd(tf.phi, dy=eps)),
            (tf.grad_div_phi(ti, xi, yi)[0], cd(tf.div_phi, dx=eps)),
            (tf.grad_div_phi(ti, xi, yi)[1], cd(tf.div_phi, dy=eps)),
        ]
        for exact, approx in checks:
            scale = 1.0 + float(np.max(np.abs(exact)))
            worst = max(worst, float(np.max(np.abs(exact - approx))) / scale)
    return worst


def regularity_weight(grad_phi: np.ndarray, gamma: float) -> float:
    """``2 sup|(grad phi)_sym,-| + max(gamma - 1, 1) sup (div phi)_-`` over sample points.

    ``grad_phi`` has shape ``(2, 2, ...)``. The spectral norm of the negative
    semidefinite part of a symmetric matrix is ``max(0, -lambda_min)``.
    """
    g = np.asarray(grad_phi, dtype=float)
    sym = 0.5 * (g + np.swapaxes(g, 0, 1))
    mats = np.moveaxis(sym.reshape(2, 2, -1), -1, 0)
    lam_min = np.linalg.eigvalsh(mats)[:, 0]
    neg_sym = float(np.max(np.maximum(0.0, -lam_min), initial=0.0))
    div = (g[0, 0] + g[1, 1]).ravel()
    neg_div = float(np.max(np.maximum(0.0, -div), initial=0.0))
    return 2.0 * neg_sym + max(gamma - 1.0, 1.0) * neg_div


# ---------------------------------------------------------------------------
# variational inequality


def _grad_rho(s: FluidState, gradient: str):
    g = s.grid
    if gradient == "forward":
        return np.stack([g.dxp(s.rho), g.dyp(s.rho)])
    if gradient == "central":
        return np.stack([g.dxc(s.rho), g.dyc(s.rho)])
    raise ValueError(f"gradient must be 'forward' or 'central', got {gradient!r}")


def _model_energy(s, params, gradient):
    if gradient == "forward":
        return discrete_energy(s, params)
    gr = _grad_rho(s, gradient)
    return integrate(eta_tilde(s.rho, s.m, params) + 0.5 * params.kappa * (gr[0] ** 2 + gr[1] ** 2), s.grid)


def snapshot_terms(s: FluidState, E: float, tf: TestFunctionPair, params: ModelParams, gradient="forward") -> dict:
    """Spatial integrals entering the variational inequality at one instant."""
    g = s.grid
    x, y = g.cell_centers()
    t = s.t
    rho, m = s.rho, s.m
    u = velocity(s, params)
    out = {"E": E}
    if tf.has_psi:
        out["rho_psi"] = integrate(rho * tf.psi_value(t, x, y), g)
        gp = tf.grad_psi(t, x, y)
        trans_psi = integrate(rho * tf.psi_t(t, x, y) + m[0] * gp[0] + m[1] * gp[1], g)
    else:
        out["rho_psi"] = 0.0
        trans_psi = 0.0
    a, b, div = strain_parts(u, g)
    s_uu = 2.0 * params.mu * integrate(2.0 * a * a + 2.0 * b * b, g) + params.eta * integrate(div * div, g)
    if tf.has_phi:
        phi = tf.phi(t, x, y)
        phit = tf.phi_t(t, x, y)
        G = tf.grad_phi(t, x, y)
        divphi = G[0, 0] + G[1, 1]
        p = pressure(rho, params)
        conv = sum(m[i] * u[j] * G[i, j] for i in range(2) for j in range(2))
        trans_phi = integrate(m[0] * phit[0] + m[1] * phit[1] + conv + p * divphi, g)
        # dev D(u) = [[a, b], [b, -a]]; D(phi) from the analytic gradient
        Dxy = 0.5 * (G[0, 1] + G[1, 0])
        s_uphi = integrate(
            2.0 * params.mu * (a * G[0, 0] + 2.0 * b * Dxy - a * G[1, 1]) + params.eta * div * divphi, g
        )
        gr = _grad_rho(s, gradient)
        gd = tf.grad_div_phi(t, x, y)
        gg = sum(gr[i] * gr[j] * G[i, j] for i in range(2) for j in range(2))
        kort = params.kappa * integrate(
            rho * (gr[0] * gd[0] + gr[1] * gd[1]) + 0.5 * (gr[0] ** 2 + gr[1] ** 2) * divphi + gg, g
        )
        K = regularity_weight(G, params.gamma)
        out["m_phi"] = integrate(m[0] * phi[0] + m[1] * phi[1], g)
    else:
        trans_phi = s_uphi = kort = K = 0.0
        out["m_phi"] = 0.0
    out["transport"] = trans_psi + trans_phi
    out["viscous"] = s_uu - s_uphi
    out["korteweg"] = kort
    out["K"] = K
    out["defect"] = K * (_model_energy(s, params, gradient) - E) if K else 0.0
    return out


def envar_terms(traj, tf: TestFunctionPair, params: ModelParams | None = None, gradient: str = "forward") -> dict:
    """Per-snapshot integrands and their cumulative time integrals.

    Returns arrays indexed by snapshot: ``t``, ``E``, ``bracket`` (the
    pointwise ``E - int rho psi - int m.phi``), ``K``, and for every
    time-integrated group its cumulative trapezoid integral from the first
    snapshot.
    """
    params = traj.params if params is None else params
    rows = [snapshot_terms(s, traj.ledger.energy_at(s.t), tf, params, gradient) for s in traj.snapshots]
    t = traj.times
    out = {"t": t}
    for key in ("E", "rho_psi", "m_phi", "K", "transport", "viscous", "korteweg", "defect"):
        out[key] = np.array([r[key] for r in rows])
    out["bracket"] = out["E"] - out["rho_psi"] - out["m_phi"]
    for key in GROUPS[1:]:
        out["cum_" + key] = cumulative_trapezoid(out[key], t, initial=0.0)
    return out


def _pair_groups(terms, i, j):
    return {
        "bracket": terms["bracket"][j] - terms["bracket"][i],
        **{k: terms["cum_" + k][j] - terms["cum_" + k][i] for k in GROUPS[1:]},
    }


def envar_tolerance(dt: float, h: float, E0: float, K: float, C: float = 10.0) -> float:
    return C * (dt**2 + h) * E0 * (1.0 + K)


def envar_residual(traj, tf: TestFunctionPair, s: float, t: float, params=None, gradient="forward", terms=None):
    """Left-hand side of the variational inequality between snapshots ``s < t``.

    Returns ``(residual, groups)`` where ``groups`` maps each integral group
    to its contribution.
    """
    if not s < t:
        raise ValueError(f"need s < t, got s={s}, t={t}")
    try:
        i, j = traj.index_of(s), traj.index_of(t)
    except KeyError as exc:
        raise ValueError(f"times ({s}, {t}) are not both snapshot times") from exc
    if terms is None:
        terms = envar_terms(traj, tf, params, gradient)
    groups = _pair_groups(terms, i, j)
    return float(sum(groups.values())), groups


@dataclass(frozen=True)
class EnvarRecord:
    test_function: str
    s: float
    t: float
    residual: float
    tolerance: float
    passed: bool
    dominant: str
    groups: dict


def evaluate_catalog(
    traj,
    pairs,
    params=None,
    min_gap: float = 0.0,
    gradient: str = "forward",
    C: float = 10.0,
    times=None,
) -> list[EnvarRecord]:
    """Residual and tolerance for every test pair and every snapshot pair ``t - s >= min_gap``.

    ``times`` restricts the candidate snapshot times. The tolerance uses the
    largest step of the run, the grid's ``h``, the first ledger energy and
    the largest ``K`` over ``[s, t]``.
    """
    params = traj.params if params is None else params
    dt = traj.max_dt()
    h = traj.grid.h
    E0 = traj.ledger.rows[0].E_h
    tt = traj.times
    idx = range(len(tt)) if times is None else sorted({traj.index_of(x) for x in times})
    idx = list(idx)
    records = []
    for tf in pairs:
        terms = envar_terms(traj, tf, params, gradient)
        for a, i in enumerate(idx):
            for j in idx[a + 1 :]:
                if tt[j] - tt[i] < min_gap - 1e-12:
                    continue
                groups = _pair_groups(terms, i, j)
                res = float(sum(groups.values()))
                K = float(np.max(terms["K"][i : j + 1]))
                tol = envar_tolerance(dt, h, E0, K, C)
                dom = max(groups, key=lambda k: abs(groups[k]))
                records.append(EnvarRecord(tf.name, float(tt[i]), float(tt[j]), res, tol, res <= tol, dom, groups))
    return records


def with_energy_perturbed(traj, t: float, factor: float):
    """Copy of ``traj`` whose ledger energy at time ``t`` is multiplied by ``factor``."""
    from .diagnostics import EnergyLedger

    times = traj.ledger.column("t")
    k = int(np.argmin(np.abs(times - t)))
    if abs(times[k] - t) > 1e-12 * max(1.0, abs(t)):
        raise KeyError(f"no ledger row at t={t}")
    rows = list(traj.ledger.rows)
    rows[k] = replace(rows[k], E_h=rows[k].E_h * factor)
    return replace(traj, ledger=EnergyLedger(rows))


def write_report(records, path) -> None:
    """Write ``<path>.json`` (machine-readable) and ``<path>.txt`` (one line per record)."""
    path = Path(path)
    data = [
        {
            "test_function": r.test_function,
            "s": r.s,
            "t": r.t,
            "residual": r.residual,
            "tolerance": r.tolerance,
            "passed": bool(r.passed),
            "dominant_group": r.dominant,
            "groups": {k: float(v) for k, v in r.groups.items()},
        }
        for r in records
    ]
    path.with_suffix(".json").write_text(json.dumps(data, indent=1))
    lines = [f"{'test_function':<20} {'s':>10} {'t':>10} {'residual':>13} {'tolerance':>13} {'ok':>4}  dominant"]
    for r in records:
        lines.append(
            f"{r.test_function:<20} {r.s:10.5f} {r.t:10.5f} {r.residual:13.5e} {r.tolerance:13.5e} "
            f"{'yes' if r.passed else 'NO':>4}  {r.dominant}"
        )
    n_fail = sum(not r.passed for r in records)
    lines.append(f"{len(records)} records, {n_fail} failed")
    path.with_suffix(".txt").write_text("\n".join(lines) + "\n")


# ---------------------------------------------------------------------------
# discrete weak forms


def _require_compact(traj, tf):
    t_end = traj.times[-1]
    if not tf.vanishes_after(t_end):
        raise ValueError(
            f"test function {tf.name!r} does not vanish by the final snapshot t={t_end}; "
            "use a cutoff time profile with t_c <= t_end"
        )


def _trapezoid(values, t):
    return float(trapezoid(values, t)) if len(t) > 1 else 0.0


def discrete_weak_residual_continuity(traj, tf: TestFunctionPair, params=None) -> float:
    """LHS minus RHS of the discrete weak continuity equation.

    ``int_0^T int (-rho psi_t - m . gradc psi + lambda h grad+ rho . grad+ psi) dt
    - int rho_0 psi(0)`` with discrete gradients of the sampled ``psi`` and
    the trapezoid rule over all stored snapshots.
    """
    if tf.is_zero or not tf.has_psi:
        return 0.0
    _require_compact(traj, tf)
    params = traj.params if params is None else params
    g = traj.grid
    x, y = g.cell_centers()
    vals = []
    for s in traj.snapshots:
        psi = tf.psi_value(s.t, x, y)
        lam = compute_lambda(s, params).value
        w = (
            -s.rho * tf.psi_t(s.t, x, y)
            - s.m[0] * g.dxc(psi)
            - s.m[1] * g.dyc(psi)
            + lam * g.h * (g.dxp(s.rho) * g.dxp(psi) + g.dyp(s.rho) * g.dyp(psi))
        )
        vals.append(integrate(w, g))
    s0 = traj.snapshots[0]
    rhs = integrate(s0.rho * tf.psi_value(s0.t, x, y), g)
    return _trapezoid(np.array(vals), traj.times) - rhs


def korteweg_weak_bracket(rho: np.ndarray, phi: np.ndarray, g: GridSpec) -> np.ndarray:
    """Cellwise integrand of the discrete Korteweg pairing ``<K(rho), phi>``.

    Summed over cells (times cell area, times kappa) it equals the integral of
    the Korteweg momentum tendency against ``phi``. In the two shifted
    products, the backward y-difference of rho pairs with the mixed
    ``Dy- Dx+`` difference of ``phi_x`` and the x-analogue with ``phi_y``.
    """
    px, py = phi
    hx, hy = g.hx, g.hy
    bxr, byr = g.dxm(rho), g.dym(rho)
    fxr, fyr = g.dxp(rho), g.dyp(rho)
    cxr, cyr = g.dxc(rho), g.dyc(rho)
    fx_px, fy_py = g.dxp(px), g.dyp(py)
    B1 = rho * byr + 0.5 * hx * rho * g.dxp(byr) + 0.5 * hx * byr * fxr
    B2 = rho * bxr + 0.5 * hy * rho * g.dyp(bxr) + 0.5 * hy * bxr * fyr
    t = B1 * g.dym(fx_px) + B2 * g.dxm(fy_py)
    t = t + rho * cxr * g.dxm(fx_px) + rho * cyr * g.dym(fy_py)
    t = t + 0.5 * fxr**2 * fx_px + 0.5 * fyr**2 * fy_py
    t = t + byr * shift(byr, 1, 0) * (shift(fx_px, 0, -1) - 0.5 * fx_px)
    t = t + bxr * shift(bxr, 0, 1) * (shift(fy_py, -1, 0) - 0.5 * fy_py)
    t = t + fxr * bxr * g.dxc(px) + fyr * byr * g.dyc(py)
    t = t + cxr * fyr * g.dyp(px) + cyr * fxr * g.dxp(py)
    return t


def momentum_weak_integrand(s: FluidState, phi, phi_t, params: ModelParams) -> float:
    """Spatial part of the discrete weak momentum form at one instant, without ``K e^h``."""
    g = s.grid
    u = velocity(s, params)
    lam = compute_lambda(s, params).value
    m = s.m
    px, py = phi
    p = pressure(s.rho, params)
    w = m[0] * phi_t[0] + m[1] * phi_t[1]
    w = w + m[0] * u[0] * g.dxc(px) + m[0] * u[1] * g.dyc(px) + m[1] * u[0] * g.dxc(py) + m[1] * u[1] * g.dyc(py)
    w = w + p * (g.dxc(px) + g.dyc(py))
    w = w + lam * g.h * (m[0] * g.lap(px) + m[1] * g.lap(py))
    a, b, div = strain_parts(u, g)
    w = w - 2.0 * params.mu * (a * g.dxp(px) + b * g.dyp(px) + b * g.dxp(py) - a * g.dyp(py))
    w = w - params.eta * div * (g.dxp(px) + g.dyp(py))
    w = w + params.kappa * korteweg_weak_bracket(s.rho, phi, g)
    return integrate(w, g)


def discrete_weak_residual_momentum(traj, tf: TestFunctionPair, params=None) -> float:
    """LHS minus RHS of the discrete weak momentum equation with the ``K E^h`` terms.

    Both sides carry ``int K(phi) E^h dt``: on the left through the cellwise
    energy density of each snapshot, on the right through the ledger. They
    cancel whenever the ledger energy is the discrete energy of the snapshot.
    """
    if tf.is_zero or not tf.has_phi:
        return 0.0
    _require_compact(traj, tf)
    params = traj.params if params is None else params
    g = traj.grid
    x, y = g.cell_centers()
    lhs, kE = [], []
    for s in traj.snapshots:
        G = tf.grad_phi(s.t, x, y)
        K = regularity_weight(G, params.gamma)
        val = momentum_weak_integrand(s, tf.phi(s.t, x, y), tf.phi_t(s.t, x, y), params)
        lhs.append(val + K * discrete_energy(s, params))
        kE.append(K * traj.ledger.energy_at(s.t))
    t = traj.times
    s0 = traj.snapshots[0]
    phi0 = tf.phi(s0.t, x, y)
    rhs = -integrate(s0.m[0] * phi0[0] + s0.m[1] * phi0[1], g) + _trapezoid(np.array(kE), t)
    return _trapezoid(np.array(lhs), t) - rhs
