"""Invariants checked on randomly drawn inputs."""
import numpy as np
from hypothesis import given
from hypothesis import strategies as st

from dkglab.clifford import build_gamma, gamma0_bilinear, project_hyperbolic, project_radial, spinor_norm2
from dkglab.fields import GridSpec, SimState, SpatialOps
from dkglab.foliation import ConeAccumulator, cone_accumulate
from dkglab.functionals import FunctionalParams, dirac_exterior_energy, exterior_flat_energy, omega
from dkglab.scattering import FreePropagator

seeds = st.integers(0, 2**32 - 1)
dims = st.sampled_from([2, 3])

G2 = GridSpec(2, 32, 8.0)
OPS2 = SpatialOps(G2)
G3 = GridSpec(3, 16, 6.0)


def _spinor(rng, N0, k):
    return rng.normal(size=(N0, k)) + 1j * rng.normal(size=(N0, k))


def _points(rng, n, k):
    x = rng.normal(size=(n, k)) * rng.uniform(0.1, 10.0)
    # keep away from the singular direction at the origin
    return np.where(np.abs(x) < 1e-8, 1e-3, x)


@given(seeds, dims)
def test_radial_projectors(seed, n):
    rng = np.random.default_rng(seed)
    rep = build_gamma(n)
    psi, x = _spinor(rng, rep.N0, 5), _points(rng, n, 5)
    m, p = project_radial(rep, psi, x, -1), project_radial(rep, psi, x, 1)
    scale = np.max(np.abs(psi))
    assert np.max(np.abs(m + p - 2 * psi)) <= 1e-12 * scale
    assert np.max(np.abs(project_radial(rep, m, x, -1) - 2 * m)) <= 1e-12 * scale
    assert np.max(np.abs(project_radial(rep, m, x, 1))) <= 1e-12 * scale
    # both halves are orthogonal, so the pieces add up in norm
    assert np.allclose(spinor_norm2(m) + spinor_norm2(p), 4 * spinor_norm2(psi), rtol=1e-12)


@given(seeds, dims, st.floats(0.01, 5.0))
def test_hyperbolic_halves_sum_to_spinor(seed, n, lift):
    rng = np.random.default_rng(seed)
    rep = build_gamma(n)
    psi, x = _spinor(rng, rep.N0, 4), _points(rng, n, 4)
    t = np.linalg.norm(x, axis=0) + lift
    m, p = project_hyperbolic(rep, psi, x, t, -1), project_hyperbolic(rep, psi, x, t, 1)
    assert np.allclose(m + p, 2 * psi, atol=1e-12 * np.max(np.abs(psi)))


@given(seeds, dims, st.floats(0.01, 5.0))
def test_bilinear_splittings(seed, n, lift):
    rng = np.random.default_rng(seed)
    rep = build_gamma(n)
    phi, chi, x = _spinor(rng, rep.N0, 8), _spinor(rng, rep.N0, 8), _points(rng, n, 8)
    t = np.linalg.norm(x, axis=0) + lift
    out = gamma0_bilinear(rep, phi, chi, x, t)
    assert out.max_relative_error() <= 1e-12


@given(seeds, st.floats(-3, 3), st.floats(-3, 3), st.integers(1, 2))
def test_derivative_is_linear(seed, a, b, axis):
    rng = np.random.default_rng(seed)
    f, g = rng.normal(size=G2.shape), rng.normal(size=G2.shape)
    lhs = OPS2.d(a * f + b * g, axis)
    rhs = a * OPS2.d(f, axis) + b * OPS2.d(g, axis)
    assert np.max(np.abs(lhs - rhs)) <= 1e-11 * (1 + abs(a) + abs(b)) * np.max(np.abs(OPS2.d(f, axis)) + 1)


@given(seeds, st.sampled_from(["dirac", "kg"]), st.floats(-20, 20), st.floats(-20, 20), st.floats(0, 1))
def test_propagator_group_and_unitarity(seed, kind, s, t, M):
    rng = np.random.default_rng(seed)
    S = FreePropagator(G3, kind, M=M if kind == "dirac" else 0.0)
    if kind == "dirac":
        d = rng.normal(size=(4,) + G3.shape) + 1j * rng.normal(size=(4,) + G3.shape)
    else:
        d = rng.normal(size=(2,) + G3.shape)
    scale = np.max(np.abs(d))
    assert np.max(np.abs(S(s, S(t, d)) - S(s + t, d))) <= 1e-10 * scale
    n0 = S.norm(d)
    assert abs(S.norm(S(t, d)) - n0) <= 1e-11 * n0


def _gaussian_state(amp, t=3.0):
    r2 = G2.r**2
    v = amp * np.exp(-r2 / 4)
    psi = np.array([amp * np.exp(-r2 / 3), 0.5j * amp * np.exp(-r2 / 5)])
    return SimState(t, psi, v, -0.3 * v, 0.0, G2)


@given(st.floats(0.01, 10.0), st.floats(0.1, 2.0))
def test_energies_scale_quadratically(c, lam):
    params = FunctionalParams(lam=lam)
    base, scaled = _gaussian_state(1.0), _gaussian_state(c)
    e0 = exterior_flat_energy(base, params, ops=OPS2)
    assert np.isclose(exterior_flat_energy(scaled, params, ops=OPS2), c**2 * e0, rtol=1e-10)
    d0 = dirac_exterior_energy(base, params)
    assert np.isclose(dirac_exterior_energy(scaled, params), c**2 * d0, rtol=1e-10)


@given(seeds, st.integers(3, 12))
def test_cone_accumulator_monotone(seed, steps):
    rng = np.random.default_rng(seed)
    acc = ConeAccumulator()
    last = 0.0
    for tau in np.linspace(2.5, 5.0, steps):
        st_ = SimState(float(tau), np.zeros((2,) + G2.shape, complex), np.zeros(G2.shape),
                       np.zeros(G2.shape), 0.0, G2)
        cone_accumulate(acc, st_, rng.uniform(0, 1, size=G2.shape) ** 2)
        assert acc.raw >= last
        last = acc.raw


@given(st.floats(-2, 50), st.floats(0.01, 3.0))
def test_ghost_weight_bounds(z, lam):
    w = float(omega(z, lam))
    assert w >= 0
    if z >= -1:
        assert w >= 1.0
