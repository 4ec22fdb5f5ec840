"""Dirac matrices, spinor projections and the exact bilinear identities.

Spinor arrays carry the component index on axis 0, so a single spinor has
shape ``(N0,)`` and a spinor field or a batch of samples has shape
``(N0, ...)``.  Spatial points use the same convention with shape ``(n, ...)``.

Representation
--------------
n = 2:  gamma^0 = sigma_3, gamma^1 = i sigma_1, gamma^2 = i sigma_2
n = 3:  gamma^0 = diag(I, -I), gamma^a = [[0, sigma_a], [-sigma_a, 0]]

Both satisfy ``g^mu g^nu + g^nu g^mu = -2 g^{mu nu} I`` with metric
``diag(-1, 1, ..., 1)``; gamma^0 is Hermitian and the spatial ones are
anti-Hermitian.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

SIGMA = np.array(
    [
        [[0, 1], [1, 0]],
        [[0, -1j], [1j, 0]],
        [[1, 0], [0, -1]],
    ],
    dtype=complex,
)


class SingularDirectionError(ValueError):
    """Raised when x/|x| is requested at x = 0."""


@dataclass(frozen=True)
class GammaRep:
    n: int
    N0: int
    gamma: np.ndarray = field(repr=False)   # (n+1, N0, N0)
    metric: np.ndarray = field(repr=False)  # (n+1,)

    @property
    def alpha(self) -> np.ndarray:
        """gamma^0 gamma^a for a = 1..n, shape (n, N0, N0); Hermitian."""
        return np.einsum("ij,ajk->aik", self.gamma[0], self.gamma[1:])

    @property
    def identity(self) -> np.ndarray:
        return np.eye(self.N0, dtype=complex)

    def spin(self, a: int, b: int) -> np.ndarray:
        """gamma^a gamma^b (spatial indices 1..n), the rotation correction."""
        return self.gamma[a] @ self.gamma[b]


def build_gamma(n: int) -> GammaRep:
    if n == 2:
        g = np.array([SIGMA[2], 1j * SIGMA[0], 1j * SIGMA[1]])
    elif n == 3:
        z = np.zeros((2, 2), dtype=complex)
        i2 = np.eye(2, dtype=complex)
        g0 = np.block([[i2, z], [z, -i2]])
        g = [g0] + [np.block([[z, s], [-s, z]]) for s in SIGMA]
        g = np.array(g)
    else:
        raise ValueError(f"unsupported dimension n={n}; expected 2 or 3")
    metric = np.array([-1.0] + [1.0] * n)
    return GammaRep(n=n, N0=g.shape[1], gamma=g, metric=metric)


def apply_matrix(A: np.ndarray, psi: np.ndarray) -> np.ndarray:
    """Apply one N0 x N0 matrix (or a field of them, shape (N0, N0, ...)).

    Constant matrices are applied entry by entry over their nonzeros, which
    is much faster than einsum for the sparse Dirac matrices on large grids.
    """
    if A.ndim == 2:
        if psi.ndim == 1 or psi[0].size < 4096:
            return np.einsum("ij,j...->i...", A, psi)
        out = np.zeros(psi.shape, dtype=np.result_type(A, psi))
        for i in range(A.shape[0]):
            for j in np.flatnonzero(A[i]):
                a = A[i, j]
                if a == 1:
                    out[i] += psi[j]
                elif a == -1:
                    out[i] -= psi[j]
                else:
                    out[i] += a * psi[j]
        return out
    return np.einsum("ij...,j...->i...", A, psi)


def dagger_dot(phi: np.ndarray, A: np.ndarray, chi: np.ndarray) -> np.ndarray:
    """phi^* A chi contracted over the spinor axis."""
    return np.einsum("i...,ij,j...->...", phi.conj(), A, chi)


def spinor_norm2(psi: np.ndarray) -> np.ndarray:
    return np.sum(np.abs(psi) ** 2, axis=0)


def _unit(x: np.ndarray) -> np.ndarray:
    r = np.sqrt(np.sum(x**2, axis=0))
    if np.any(r == 0):
        raise SingularDirectionError("x/|x| is undefined at x = 0")
    return x / r


def direction_operator(rep: GammaRep, coef: np.ndarray) -> np.ndarray:
    """sum_a coef_a gamma^0 gamma^a as an (N0, N0, ...) field of matrices."""
    return np.einsum("aij,a...->ij...", rep.alpha, coef)


def _project(rep: GammaRep, psi: np.ndarray, coef: np.ndarray, sign: int) -> np.ndarray:
    if sign not in (1, -1):
        raise ValueError("sign must be +1 or -1")
    A = direction_operator(rep, coef)
    return psi + sign * apply_matrix(A, psi)


def project_radial(rep: GammaRep, psi: np.ndarray, x: np.ndarray, sign: int = -1) -> np.ndarray:
    """[psi]_sign = psi + sign (x_a/r) gamma^0 gamma^a psi."""
    return _project(rep, psi, _unit(np.asarray(x, dtype=float)), sign)


def project_hyperbolic(rep: GammaRep, psi: np.ndarray, x: np.ndarray, t, sign: int = -1) -> np.ndarray:
    """(psi)_sign = psi + sign (x_a/t) gamma^0 gamma^a psi."""
    t = np.asarray(t, dtype=float)
    if np.any(t <= 0):
        raise ValueError("hyperbolic projection needs t > 0")
    return _project(rep, psi, np.asarray(x, dtype=float) / t, sign)


@dataclass
class BilinearReport:
    direct: np.ndarray
    radial: np.ndarray
    hyperbolic: np.ndarray

    def max_relative_error(self) -> float:
        scale = max(float(np.max(np.abs(self.direct))), 1e-300)
        err = max(
            float(np.max(np.abs(self.radial - self.direct))),
            float(np.max(np.abs(self.hyperbolic - self.direct))),
        )
        return err / scale


def gamma0_bilinear(rep: GammaRep, phi: np.ndarray, chi: np.ndarray, x: np.ndarray, t) -> BilinearReport:
    """phi^* gamma^0 chi together with its radial and hyperbolic splittings."""
    g0 = rep.gamma[0]
    x = np.asarray(x, dtype=float)
    t = np.asarray(t, dtype=float)
    direct = dagger_dot(phi, g0, chi)
    pm, pp = project_radial(rep, phi, x, -1), project_radial(rep, phi, x, 1)
    cm, cp = project_radial(rep, chi, x, -1), project_radial(rep, chi, x, 1)
    radial = 0.25 * (dagger_dot(pm, g0, cp) + dagger_dot(pp, g0, cm))
    hm, hp = project_hyperbolic(rep, phi, x, t, -1), project_hyperbolic(rep, phi, x, t, 1)
    km, kp = project_hyperbolic(rep, chi, x, t, -1), project_hyperbolic(rep, chi, x, t, 1)
    r2 = np.sum(x**2, axis=0)
    hyperbolic = 0.25 * (
        dagger_dot(hm, g0, kp) + dagger_dot(hp, g0, km) + 2 * (1 - r2 / t**2) * direct
    )
    return BilinearReport(direct=direct, radial=radial, hyperbolic=hyperbolic)


def radial_identity_gap(rep: GammaRep, psi: np.ndarray, x: np.ndarray) -> np.ndarray:
    """psi*psi - eta_a psi* g0 g^a psi - |[psi]_-|^2 / 2 (zero in exact arithmetic)."""
    eta = _unit(np.asarray(x, dtype=float))
    A = direction_operator(rep, eta)
    lhs = spinor_norm2(psi) - np.real(np.einsum("i...,ij...,j...->...", psi.conj(), A, psi))
    return lhs - 0.5 * spinor_norm2(project_radial(rep, psi, x, -1))


def hyperbolic_identity_gap(rep: GammaRep, psi: np.ndarray, x: np.ndarray, t) -> np.ndarray:
    """psi*psi - xi_a psi* g0 g^a psi - (|(psi)_-|^2 + (s/t)^2 |psi|^2)/2."""
    x = np.asarray(x, dtype=float)
    t = np.asarray(t, dtype=float)
    A = direction_operator(rep, x / t)
    lhs = spinor_norm2(psi) - np.real(np.einsum("i...,ij...,j...->...", psi.conj(), A, psi))
    s2_t2 = 1 - np.sum(x**2, axis=0) / t**2
    rhs = 0.5 * (spinor_norm2(project_hyperbolic(rep, psi, x, t, -1)) + s2_t2 * spinor_norm2(psi))
    return lhs - rhs
