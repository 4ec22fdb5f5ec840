import math

import numpy as np
import pytest
import sympy as sp
from scipy import integrate

import oracles
from dkglab.clifford import build_gamma, project_hyperbolic, spinor_norm2
from dkglab.fields import GridSpec, SimState, SpatialOps
from dkglab.foliation import FoliationSlice, hyperboloid_slice
from dkglab.functionals import (
    BootstrapDensity,
    EnergyFormMismatch,
    EnergyIdentity,
    FunctionalParams,
    GhostYNorms,
    Observables,
    bootstrap_terms,
    decay_fit,
    dirac_exterior_energy,
    dirac_hyperboloid_energy,
    e_h_forms,
    energy_identity_residual,
    exterior_flat_energy,
    ghost_Y_norms,
    hyperboloid_energy,
    last_quarter_growth,
    mass_weighted_bounds,
    write_report_csv,
)
from dkglab.solver import History, HistoryRecorder, RunConfig, evolve


def _state(grid, t=2.0, psi=None, v=None, vt=None, M=0.0):
    N0 = build_gamma(grid.n).N0
    z = np.zeros(grid.shape)
    return SimState(
        t=t,
        psi=np.zeros((N0,) + grid.shape, complex) if psi is None else psi,
        v=z.copy() if v is None else v,
        vt=z.copy() if vt is None else vt,
        M=M,
        grid=grid,
    )


P1 = FunctionalParams(lam=1.0, delta=0.0)


def test_params_validation():
    with pytest.raises(ValueError):
        FunctionalParams(lam=0.0)
    with pytest.raises(ValueError):
        FunctionalParams(delta=-1.0)
    assert FunctionalParams(lam=3.0).lam0 == 0.5


def test_exterior_energies_of_zero():
    g = GridSpec(2, 32, 8.0)
    assert exterior_flat_energy(_state(g), P1) == 0.0
    assert dirac_exterior_energy(_state(g), P1) == 0.0


def test_exterior_flat_energy_gaussian():
    g = GridSpec(2, 256, 16.0)
    st = _state(g, v=0.3 * np.exp(-g.r**2 / 4.0))
    got = exterior_flat_energy(st, P1)
    assert abs(got / oracles.FROZEN["ext_gaussian_2d"] - 1) <= 0.005
    assert abs(oracles.exterior_gaussian_energy(2.0, 1.0, 0.3, 2.0) / oracles.FROZEN["ext_gaussian_2d"] - 1) < 1e-12


def test_dirac_exterior_energy_gaussian():
    g = GridSpec(2, 256, 16.0)
    u = np.array([0.6, 0.8j]).reshape(2, 1, 1)
    st = _state(g, psi=u * np.exp(-g.r**2 / 4.0))
    got = dirac_exterior_energy(st, P1)
    assert abs(got / oracles.FROZEN["ext_charge_2d"] - 1) <= 0.005


def test_dirac_exterior_energy_unfolds_definition(rng):
    from dkglab.functionals import exterior_weight

    g = GridSpec(2, 32, 8.0)
    psi = rng.normal(size=(2,) + g.shape) + 1j * rng.normal(size=(2,) + g.shape)
    st = _state(g, t=3.0, psi=psi)
    w = exterior_weight(g, 3.0) * np.maximum(2 + g.r - 3.0, 0) ** 2
    direct = np.sum(w * (np.abs(psi[0]) ** 2 + np.abs(psi[1]) ** 2)) * g.cell
    assert math.isclose(dirac_exterior_energy(st, P1), direct, rel_tol=1e-13)


def test_energy_increases_with_lambda():
    g = GridSpec(2, 64, 16.0)
    st = _state(g, t=2.0, v=np.exp(-((g.r - 4.0) ** 2)))
    vals = [exterior_flat_energy(st, FunctionalParams(lam=lam, delta=0.0)) for lam in (0.5, 1.0, 2.0)]
    assert vals[0] < vals[1] < vals[2]


def test_quadratic_scaling(rng):
    g = GridSpec(2, 32, 8.0)
    v = np.exp(-g.r**2 / 3)
    psi = np.array([v, 0.5j * v])
    a = _state(g, t=2.5, psi=psi, v=v, vt=0.2 * v)
    b = _state(g, t=2.5, psi=3 * psi, v=3 * v, vt=0.6 * v)
    assert math.isclose(exterior_flat_energy(b, P1), 9 * exterior_flat_energy(a, P1), rel_tol=1e-13)
    assert math.isclose(dirac_exterior_energy(b, P1), 9 * dirac_exterior_energy(a, P1), rel_tol=1e-13)
    ta = bootstrap_terms(a, SpatialOps(g), P1, 0)["total"]
    tb = bootstrap_terms(b, SpatialOps(g), P1, 0)["total"]
    assert math.isclose(tb, 9 * ta, rel_tol=1e-12)


# --------------------------------------------------------------------------
# hyperboloidal densities


def test_eh_forms_agree_with_symbolic_expansion(rng):
    u = oracles.random_poly(rng, degree=3)
    f_sym = oracles.eh_forms_symbolic(u)
    du = [sp.diff(u, c) for c in oracles.COORDS]
    s = 2.0
    x = rng.uniform(-3, 3, size=(2, 50))
    t = np.sqrt(s**2 + np.sum(x**2, axis=0))
    pts = np.array([t, x[0], x[1]])
    vals = [oracles.evaluate(e, pts).real for e in [u] + du]
    got = e_h_forms(vals[0], vals[1], vals[2:], x, t, s)
    for k in range(3):
        ref = oracles.evaluate(f_sym[k], pts).real
        np.testing.assert_allclose(got[k], ref, rtol=1e-10, atol=1e-12)
    np.testing.assert_allclose(got[0], got[1], rtol=1e-10)
    np.testing.assert_allclose(got[0], got[2], rtol=1e-10)


def _slice(grid, s, rmax, values):
    from dkglab.foliation import slice_nodes

    idx, x, t = slice_nodes(grid, s, "full", rmax)
    return FoliationSlice(s, "full", x, t, np.full(t.size, grid.cell), {k: f(x, t) for k, f in values.items()}, idx)


def test_hyperboloid_energy_of_constant():
    g = GridSpec(2, 32, 8.0)
    sl = _slice(g, 2.0, 5.0, {"u": lambda x, t: np.full(t.size, 1.5), "ut": lambda x, t: np.zeros(t.size),
                              "grad": lambda x, t: np.zeros((2, t.size))})
    val = hyperboloid_energy(sl, P1)
    assert math.isclose(val, 1.5**2 * len(sl) * g.cell, rel_tol=1e-13)


def test_hyperboloid_energy_detects_inconsistent_slice():
    g = GridSpec(2, 32, 8.0)
    sl = _slice(g, 2.0, 5.0, {"u": lambda x, t: np.ones(t.size), "ut": lambda x, t: np.ones(t.size),
                              "grad": lambda x, t: np.ones((2, t.size))})
    sl.t = sl.t + 0.5
    with pytest.raises(EnergyFormMismatch):
        hyperboloid_energy(sl, P1)


def test_dirac_hyperboloid_energy(rng):
    g = GridSpec(2, 32, 8.0)
    rep = build_gamma(2)
    zero = _slice(g, 2.0, 5.0, {"psi": lambda x, t: np.zeros((2, t.size), complex)})
    assert dirac_hyperboloid_energy(zero, rep) == 0.0
    sl = _slice(g, 2.0, 5.0, {"psi": lambda x, t: rng.normal(size=(2, t.size)) + 1j * rng.normal(size=(2, t.size))})
    P = sl.values["psi"]
    # pointwise density equals 2 (psi* psi - (x_a/t) psi* g0 g^a psi)
    A = np.einsum("aij,a...->ij...", rep.alpha, sl.x / sl.t)
    twice = 2 * (spinor_norm2(P) - np.einsum("i...,ij...,j...->...", P.conj(), A, P).real)
    dens = spinor_norm2(project_hyperbolic(rep, P, sl.x, sl.t, -1)) + (2.0 / sl.t) ** 2 * spinor_norm2(P)
    np.testing.assert_allclose(dens, twice, rtol=1e-12)
    assert math.isclose(dirac_hyperboloid_energy(sl, rep), sl.integrate(twice), rel_tol=1e-12)
    centre = np.argmin(sl.r)
    assert sl.r[centre] == 0.0
    np.testing.assert_allclose(dens[centre], 2 * spinor_norm2(P)[centre], rtol=1e-14)


# --------------------------------------------------------------------------
# ghost norms and the bootstrap density


def _manufactured_history(grid, T=4.0, dt=0.01):
    """v = exp(-(t-2)) exp(-r^2/4), psi = 0, stored with exact d_t v."""
    h = History(dt)
    for t in np.arange(2.0, T + dt / 2, dt):
        v = math.exp(-(t - 2)) * np.exp(-grid.r**2 / 4)
        h.offer(_state(grid, t=float(t), v=v, vt=-v))
    return h


def _ghost_oracle(T, lam, delta):
    def f(r, tau):
        v = math.exp(-(tau - 2)) * math.exp(-r * r / 4)
        vr, vt = -r / 2 * v, -v
        return 2 * math.pi * r * tau ** (-delta) * (1 + lam) * (2 + r - tau) ** lam * ((vr + vt) ** 2 + v * v)

    return integrate.dblquad(f, 2.0, T, lambda tau: tau - 1, lambda tau: 30.0, epsabs=1e-13, epsrel=1e-10)[0]


def test_ghost_norm_against_closed_quadrature():
    g = GridSpec(2, 128, 16.0)
    p = FunctionalParams(lam=1.0, delta=0.05)
    h = _manufactured_history(g)
    row = ghost_Y_norms(h, p)
    ghost = (row["Y_ex_1"] - math.sqrt(row["E_ex_1"])) ** 2
    assert abs(ghost / _ghost_oracle(4.0, 1.0, 0.05) - 1) <= 0.01


def test_ghost_norms_of_zero_and_monotone():
    g = GridSpec(2, 64, 12.0)
    h = History(0.02)
    for t in np.arange(2.0, 2.5, 0.02):
        h.offer(_state(g, t=float(t)))
    assert all(v == 0.0 for v in ghost_Y_norms(h).values())

    cfg = RunConfig(n=2, points=64, L=16.0, t_end=5.0, eps0=0.1, width=1.5, R0=6.0, dt_factor=0.2)
    mon = GhostYNorms(FunctionalParams(), stride=2)
    boot = BootstrapDensity(FunctionalParams(), N_ord=1, stride=2)
    evolve(cfg, [mon, boot])
    for acc in (mon.ghost_v, mon.ghost_psi):
        vals = np.array([v for _, v in acc.series])
        assert np.all(np.diff(vals) >= 0)
    assert np.all(np.diff(mon.R1.values) >= 0) and np.all(np.diff(mon.RD.values) >= 0)
    _, I = boot.running_integral()
    assert np.all(np.diff(I) >= 0)


def test_ghost_stride_limit():
    with pytest.raises(ValueError):
        GhostYNorms(stride=5)


def test_bootstrap_zero_and_ghost_rate_match(rng):
    g = GridSpec(2, 48, 10.0)
    ops = SpatialOps(g)
    assert bootstrap_terms(_state(g, t=3.0), ops, P1, 2)["total"] == 0.0
    env = np.exp(-((g.r - 2.0) ** 2))
    psi = np.array([env, (0.3 + 0.4j) * env])
    st = _state(g, t=3.0, psi=psi, v=0.5 * env)
    mon = GhostYNorms(P1)
    mon.ops, mon.rep = ops, build_gamma(2)
    _, rate_psi = mon.rates(st)
    psi_term = bootstrap_terms(st, ops, P1, N_ord=0)["psi"]
    assert abs(rate_psi - (1 + P1.lam) * psi_term) <= 1e-10 * abs(rate_psi)


# --------------------------------------------------------------------------
# energy identities


def _free_run(which, points=64, L=16.0, t_end=6.0):
    cfg = RunConfig(n=2, points=points, L=L, t_end=t_end, eps0=0.1, width=1.5, R0=6.0, coupling=False)
    rec = HistoryRecorder(cfg.dt)
    evolve(cfg, [rec])
    return rec.history


def test_free_wave_plain_conservation():
    h = _free_run("KG", t_end=4.0)
    r = energy_identity_residual(h, which="KG", params=FunctionalParams(delta=0.0), omega_kind="one", region="full",
                                 coupling=False)
    assert r <= 1e-6


def test_free_dirac_ghost_identity_balances():
    h = _free_run("Dirac", points=96)
    assert energy_identity_residual(h, which="Dirac", coupling=False) <= 0.02


def test_coupled_dirac_source_vanishes():
    cfg = RunConfig(n=2, points=64, L=16.0, t_end=5.0, eps0=0.2, width=1.5, R0=6.0)
    mon = EnergyIdentity("Dirac")
    evolve(cfg, [mon])
    assert mon.source_fraction() <= 1e-12
    assert mon.residual() <= 0.02


def test_energy_identity_rejects_bad_options():
    with pytest.raises(ValueError):
        EnergyIdentity("Maxwell")
    with pytest.raises(ValueError):
        EnergyIdentity("KG", omega_kind="other")


# --------------------------------------------------------------------------
# decay fits and mass weights


def test_decay_fit_synthetic():
    t = np.linspace(10, 40, 31)
    f = decay_fit(t, np.full(t.size, 2.5))
    assert f.exponent == 0.0 and f.stderr == 0.0
    f = decay_fit(t, 3.0 / t)
    assert abs(f.exponent + 1) <= 1e-12 and f.stderr <= 1e-12
    with pytest.raises(ValueError):
        decay_fit(t[:5], 1 / t[:5])


def test_last_quarter_growth():
    t = np.linspace(0, 1, 101)
    assert last_quarter_growth(t, np.ones_like(t)) == 0.0
    assert math.isclose(last_quarter_growth(t, 1 + t), 2.0 / (1 + 0.74) - 1, rel_tol=1e-12)


def _mass_run(M, eps0):
    cfg = RunConfig(n=3, M=M, points=32, L=12.0, t_end=4.0, eps0=eps0, width=1.0, R0=6.0)
    ob = Observables(2)
    evolve(cfg, [ob])
    return mass_weighted_bounds(ob, M)


def test_mass_weights_vanish_at_zero_mass():
    rep = _mass_run(0.0, 0.02)
    assert np.all(rep.interior == 0) and np.all(rep.exterior == 0)
    assert rep.constant == 0.0 and rep.growth() == 0.0


def test_mass_weights_linear_in_data():
    a, b = _mass_run(0.5, 0.02), _mass_run(0.5, 0.04)
    ratio = b.constant / a.constant
    assert 1.6 <= ratio <= 2.4


def test_mass_weights_need_three_dimensions():
    cfg = RunConfig(n=2, points=32, L=12.0, t_end=2.5, R0=6.0)
    ob = Observables()
    evolve(cfg, [ob])
    with pytest.raises(ValueError):
        mass_weighted_bounds(ob, 0.0)


def test_report_rejects_undocumented_columns(tmp_path):
    with pytest.raises(ValueError):
        write_report_csv(tmp_path / "r.csv", [{"t": 2.0, "mystery": 1.0}])
    write_report_csv(tmp_path / "r.csv", [{"t": 2.0, "sup_v": 0.5}])
    assert (tmp_path / "r.csv").read_text().splitlines()[0] == "t,sup_v"
