import numpy as np
import pytest

import oracles
from dkglab.clifford import (
    SingularDirectionError,
    build_gamma,
    direction_operator,
    gamma0_bilinear,
    hyperbolic_identity_gap,
    project_hyperbolic,
    project_radial,
    radial_identity_gap,
    spinor_norm2,
)


def _spinors(rng, N0, k):
    return rng.normal(size=(N0, k)) + 1j * rng.normal(size=(N0, k))


def test_sizes_and_gamma0_square():
    assert build_gamma(2).N0 == 2
    assert build_gamma(3).N0 == 4
    g0 = build_gamma(2).gamma[0]
    assert np.array_equal(g0 @ g0, np.eye(2))


@pytest.mark.parametrize("n", [2, 3])
def test_anticommutator_exact(n):
    rep = build_gamma(n)
    g = rep.gamma
    for mu in range(n + 1):
        for nu in range(n + 1):
            ac = g[mu] @ g[nu] + g[nu] @ g[mu]
            target = -2 * (rep.metric[mu] if mu == nu else 0.0) * np.eye(rep.N0)
            assert np.max(np.abs(ac - target)) <= 1e-15


@pytest.mark.parametrize("n", [2, 3])
def test_matches_pauli_construction(n):
    rep = build_gamma(n)
    for mu, ref in enumerate(oracles.gammas(n)):
        np.testing.assert_array_equal(rep.gamma[mu], ref)


@pytest.mark.parametrize("n", [2, 3])
def test_adjoint_structure(n):
    g = build_gamma(n).gamma
    np.testing.assert_array_equal(g[0].conj().T, g[0])
    for a in range(1, n + 1):
        np.testing.assert_array_equal(g[a].conj().T, -g[a])


def test_unsupported_dimension():
    with pytest.raises(ValueError):
        build_gamma(4)


@pytest.mark.parametrize("n", [2, 3])
def test_radial_projection_basics(n, rng):
    rep = build_gamma(n)
    psi = _spinors(rng, rep.N0, 100)
    x = rng.normal(size=(n, 100))
    assert np.all(project_radial(rep, np.zeros_like(psi), x) == 0)
    total = project_radial(rep, psi, x, -1) + project_radial(rep, psi, x, 1)
    np.testing.assert_allclose(total, 2 * psi, atol=1e-14)


@pytest.mark.parametrize("n", [2, 3])
def test_radial_projection_against_dense_oracle(n, rng):
    rep = build_gamma(n)
    psi = _spinors(rng, rep.N0, 50)
    x = rng.normal(size=(n, 50))
    got = project_radial(rep, psi, x, -1)
    for i in range(50):
        eta = x[:, i] / np.linalg.norm(x[:, i])
        ref = psi[:, i] - oracles.radial_matrix(n, eta) @ psi[:, i]
        np.testing.assert_allclose(got[:, i], ref, atol=1e-14)


@pytest.mark.parametrize("n", [2, 3])
def test_projector_algebra(n, rng):
    rep = build_gamma(n)
    I = np.eye(rep.N0)
    g0 = rep.gamma[0]
    for _ in range(20):
        x = rng.normal(size=n)
        A = direction_operator(rep, x / np.linalg.norm(x))
        Pm, Pp = I - A, I + A
        np.testing.assert_allclose(Pm @ Pm, 2 * Pm, atol=1e-14)
        np.testing.assert_allclose(Pp @ Pp, 2 * Pp, atol=1e-14)
        np.testing.assert_allclose(Pp @ Pm, 0, atol=1e-14)
        # annihilation identity (I - eta g0 g) g0 (I - eta g0 g) = 0
        np.testing.assert_allclose(Pm @ g0 @ Pm, 0, atol=1e-14)


def test_radial_projection_singular_direction():
    rep = build_gamma(2)
    with pytest.raises(SingularDirectionError):
        project_radial(rep, np.ones(2, dtype=complex), np.zeros(2))


@pytest.mark.parametrize("n", [2, 3])
def test_hyperbolic_projection(n, rng):
    rep = build_gamma(n)
    psi = _spinors(rng, rep.N0, 20)
    np.testing.assert_array_equal(project_hyperbolic(rep, psi, np.zeros((n, 20)), 3.0), psi)
    x = rng.normal(size=(n, 20))
    total = project_hyperbolic(rep, psi, x, 2.5, -1) + project_hyperbolic(rep, psi, x, 2.5, 1)
    np.testing.assert_allclose(total, 2 * psi, atol=1e-14)
    # on the light cone r = t the two projections agree
    t = np.linalg.norm(x, axis=0)
    a = project_hyperbolic(rep, psi, x, t, -1)
    b = project_radial(rep, psi, x, -1)
    for i in range(20):
        ref = psi[:, i] - oracles.radial_matrix(n, x[:, i] / t[i]) @ psi[:, i]
        np.testing.assert_allclose(a[:, i], ref, atol=1e-13)
    np.testing.assert_allclose(a, b, atol=1e-13)


def test_hyperbolic_projection_rejects_nonpositive_time():
    rep = build_gamma(2)
    with pytest.raises(ValueError):
        project_hyperbolic(rep, np.ones(2, dtype=complex), np.ones(2), 0.0)


@pytest.mark.parametrize("n", [2, 3])
def test_bilinear_decompositions(n, rng):
    rep = build_gamma(n)
    k = 1000
    phi, chi = _spinors(rng, rep.N0, k), _spinors(rng, rep.N0, k)
    x = rng.normal(size=(n, k))
    t = np.linalg.norm(x, axis=0) + rng.uniform(0.1, 3.0, size=k)
    rep_ = gamma0_bilinear(rep, phi, chi, x, t)
    assert rep_.max_relative_error() <= 1e-13
    ref = np.array([oracles.bilinear(n, phi[:, i], chi[:, i]) for i in range(k)])
    np.testing.assert_allclose(rep_.direct, ref, rtol=1e-13, atol=1e-13)
    bound = 0.5 * (
        np.sqrt(spinor_norm2(project_radial(rep, phi, x, -1)) * spinor_norm2(chi))
        + np.sqrt(spinor_norm2(phi) * spinor_norm2(project_radial(rep, chi, x, -1)))
    )
    assert np.all(np.abs(rep_.direct) <= bound * (1 + 1e-12))


def test_bilinear_of_zero():
    rep = build_gamma(3)
    z = np.zeros(4, dtype=complex)
    out = gamma0_bilinear(rep, z, z, np.ones(3), 2.0)
    assert out.direct == 0 and out.radial == 0 and out.hyperbolic == 0


@pytest.mark.parametrize("n", [2, 3])
def test_radial_and_hyperbolic_identities(n, rng):
    rep = build_gamma(n)
    psi = _spinors(rng, rep.N0, 200)
    x = rng.normal(size=(n, 200))
    t = np.linalg.norm(x, axis=0) + 0.5
    scale = spinor_norm2(psi)
    assert np.max(np.abs(radial_identity_gap(rep, psi, x)) / scale) <= 1e-13
    assert np.max(np.abs(hyperbolic_identity_gap(rep, psi, x, t)) / scale) <= 1e-13
