"""Grid fields on the periodic box [-L, L)^n, spatial derivatives and the
commuting vector fields.

Time derivatives inside the vector fields are never finite-differenced.  A
field at fixed t is carried as a *jet* ``[u, d_t u, d_t^2 u, ...]`` whose
time derivatives come from the equations of motion (see :func:`onshell_jets`).
A vector field containing d_t consumes one jet order.
"""
from __future__ import annotations

import itertools
import struct
from dataclasses import dataclass, replace
from functools import cached_property
from math import comb

import numpy as np
import scipy.fft as sfft

from .clifford import GammaRep, apply_matrix, build_gamma, dagger_dot


@dataclass(frozen=True)
class GridSpec:
    n: int
    points: int
    L: float

    def __post_init__(self):
        if self.n not in (2, 3):
            raise ValueError("n must be 2 or 3")
        if self.points < 16 or self.points % 2:
            raise ValueError("points_per_axis must be an even integer >= 16")
        if self.L <= 0:
            raise ValueError("half width L must be positive")

    @property
    def dx(self) -> float:
        return 2 * self.L / self.points

    @property
    def shape(self) -> tuple:
        return (self.points,) * self.n

    @property
    def cell(self) -> float:
        return self.dx**self.n

    @cached_property
    def axis(self) -> np.ndarray:
        return -self.L + self.dx * np.arange(self.points)

    @cached_property
    def x(self) -> np.ndarray:
        """Node coordinates, shape (n, *shape)."""
        return np.array(np.meshgrid(*([self.axis] * self.n), indexing="ij"))

    @cached_property
    def r(self) -> np.ndarray:
        return np.sqrt(np.sum(self.x**2, axis=0))

    @cached_property
    def k(self) -> list:
        """Broadcastable wavenumbers per axis; the Nyquist mode is zeroed so
        that the discrete Laplacian equals the sum of squared first derivatives."""
        k1 = 2 * np.pi * sfft.fftfreq(self.points, d=self.dx)
        k1[self.points // 2] = 0.0
        out = []
        for a in range(self.n):
            sh = [1] * self.n
            sh[a] = self.points
            out.append(k1.reshape(sh))
        return out

    @cached_property
    def k2(self) -> np.ndarray:
        return sum(ka**2 for ka in self.k) * np.ones(self.shape)

    @cached_property
    def origin_mask(self) -> np.ndarray:
        """True on nodes with r < 2 dx, where x/r is not evaluated."""
        return self.r < 2 * self.dx

    @cached_property
    def eta(self) -> np.ndarray:
        """x/r with zeros on the origin mask."""
        r = np.where(self.origin_mask, 1.0, self.r)
        return np.where(self.origin_mask, 0.0, self.x / r)

    @cached_property
    def sup_mask(self) -> np.ndarray:
        """Nodes admitted to sup-norms: off the origin ball and the outer
        4-node shell of the box."""
        idx = np.arange(self.points)
        inner = (idx >= 4) & (idx < self.points - 4)
        m = np.ones(self.shape, dtype=bool)
        for a in range(self.n):
            sh = [1] * self.n
            sh[a] = self.points
            m &= inner.reshape(sh)
        return m & ~self.origin_mask

    def integrate(self, f: np.ndarray) -> float:
        return float(np.sum(f) * self.cell)

    def max_time(self, R0: float, t0: float = 2.0) -> float:
        """Largest end time with no wrap-around for data supported in r <= R0."""
        return self.L - R0 - 2 * self.dx + t0


class SpatialOps:
    """Spatial derivatives on a grid: spectral (default) or 4th-order FD."""

    def __init__(self, grid: GridSpec, method: str = "spectral", workers: int | None = None):
        if method not in ("spectral", "fd4"):
            raise ValueError("method must be 'spectral' or 'fd4'")
        self.grid = grid
        self.method = method
        self.workers = workers
        self._axes = tuple(range(-grid.n, 0))

    def _check(self, f):
        if not np.all(np.isfinite(f)):
            raise FloatingPointError("non-finite values in field")

    def fft(self, f):
        return sfft.fftn(f, axes=self._axes, workers=self.workers)

    def ifft(self, fh):
        return sfft.ifftn(fh, axes=self._axes, workers=self.workers)

    def _back(self, fh, real):
        out = self.ifft(fh)
        return out.real if real else out

    def rfft(self, f):
        return sfft.rfftn(f, axes=self._axes, workers=self.workers)

    def irfft(self, fh):
        return sfft.irfftn(fh, s=self.grid.shape, axes=self._axes, workers=self.workers)

    def _rk(self, a):
        """Wavenumbers matching the half spectrum of rfftn."""
        k = self.grid.k[a]
        if a == self.grid.n - 1:
            k = k[..., : self.grid.points // 2 + 1]
        return k

    @cached_property
    def _rk2(self):
        return sum(self._rk(a) ** 2 for a in range(self.grid.n))

    def d(self, f: np.ndarray, a: int) -> np.ndarray:
        """d/dx_a, a in 1..n, acting on the trailing n axes."""
        if not 1 <= a <= self.grid.n:
            raise ValueError(f"axis must be in 1..{self.grid.n}")
        self._check(f)
        if self.method == "fd4":
            ax = a - 1 - self.grid.n
            h = self.grid.dx
            return (
                -np.roll(f, -2, ax) + 8 * np.roll(f, -1, ax) - 8 * np.roll(f, 1, ax) + np.roll(f, 2, ax)
            ) / (12 * h)
        if np.isrealobj(f):
            return self.irfft(1j * self._rk(a - 1) * self.rfft(f))
        return self.ifft(1j * self.grid.k[a - 1] * self.fft(f))

    def grad(self, f: np.ndarray) -> list:
        if self.method == "fd4":
            return [self.d(f, a) for a in range(1, self.grid.n + 1)]
        self._check(f)
        if np.isrealobj(f):
            fh = self.rfft(f)
            return [self.irfft(1j * self._rk(a) * fh) for a in range(self.grid.n)]
        fh = self.fft(f)
        return [self.ifft(1j * ka * fh) for ka in self.grid.k]

    def lap(self, f: np.ndarray) -> np.ndarray:
        self._check(f)
        if self.method == "fd4":
            h2 = self.grid.dx**2
            out = np.zeros_like(f)
            for a in range(self.grid.n):
                ax = a - self.grid.n
                out = out + (
                    -np.roll(f, -2, ax) + 16 * np.roll(f, -1, ax) - 30 * f + 16 * np.roll(f, 1, ax) - np.roll(f, 2, ax)
                ) / (12 * h2)
            return out
        if np.isrealobj(f):
            return self.irfft(-self._rk2 * self.rfft(f))
        return self.ifft(-self.grid.k2 * self.fft(f))

    def dirac_spatial(self, rep: GammaRep, psi: np.ndarray) -> np.ndarray:
        """-g0 g^a d_a psi with one forward and one inverse transform."""
        if self.method == "fd4":
            out = np.zeros_like(psi, dtype=complex)
            for a in range(self.grid.n):
                out -= apply_matrix(rep.alpha[a], self.d(psi, a + 1))
            return out
        self._check(psi)
        ph = self.fft(psi)
        acc = np.zeros_like(ph)
        for i, j, sym in self._symbol(rep):
            acc[i] += sym * ph[j]
        return self.ifft(acc)

    def _symbol(self, rep: GammaRep) -> list:
        """Nonzero entries (i, j, field) of -i sum_a k_a g0 g^a per mode."""
        key = rep.n
        cache = self.__dict__.setdefault("_symbol_cache", {})
        if key not in cache:
            entries = []
            for i in range(rep.N0):
                for j in range(rep.N0):
                    c = rep.alpha[:, i, j]
                    if np.any(c != 0):
                        f = sum(-1j * c[a] * self.grid.k[a] for a in range(rep.n) if c[a] != 0)
                        entries.append((i, j, np.broadcast_to(f, self.grid.shape).copy()))
            cache[key] = entries
        return cache[key]


@dataclass
class SimState:
    """(psi, v, d_t v) at time t; Psi/Psit hold the optional wave potential."""

    t: float
    psi: np.ndarray
    v: np.ndarray
    vt: np.ndarray
    M: float
    grid: GridSpec
    Psi: np.ndarray | None = None
    Psit: np.ndarray | None = None

    def __post_init__(self):
        sh = self.grid.shape
        if self.psi.shape[1:] != sh or self.v.shape != sh or self.vt.shape != sh:
            raise ValueError("fields must share the grid shape")

    @property
    def rep(self) -> GammaRep:
        return build_gamma(self.grid.n)

    def arrays(self) -> tuple:
        out = (self.psi, self.v, self.vt)
        if self.Psi is not None:
            out = out + (self.Psi, self.Psit)
        return out

    def with_arrays(self, t, arrays) -> "SimState":
        kw = dict(t=t, psi=arrays[0], v=arrays[1], vt=arrays[2])
        if len(arrays) > 3:
            kw.update(Psi=arrays[3], Psit=arrays[4])
        return replace(self, **kw)

    def is_finite(self) -> bool:
        return all(np.all(np.isfinite(a)) for a in self.arrays())


# --------------------------------------------------------------------------
# on-shell jets


def dirac_operator_spatial(rep: GammaRep, ops: SpatialOps, psi, M):
    """-gamma^0 gamma^a d_a psi + i M gamma^0 psi."""
    out = ops.dirac_spatial(rep, psi)
    if M:
        out += 1j * M * apply_matrix(rep.gamma[0], psi)
    return out


def time_derivative_onshell(state: SimState, ops: SpatialOps | None = None):
    """(d_t psi, d_t v) from the equations of motion; d_t v is the stored vt."""
    ops = ops or SpatialOps(state.grid)
    rep = state.rep
    psit = dirac_operator_spatial(rep, ops, state.psi, state.M)
    psit = psit - 1j * apply_matrix(rep.gamma[0], state.v * state.psi)
    return psit, state.vt


def onshell_jets(state: SimState, ops: SpatialOps, order: int):
    """Jets of psi and v up to ``order`` time derivatives.

    Uses d_t psi = -g0 g^a d_a psi + i M g0 psi - i g0 (v psi) and
    d_t^2 v = Lap v - v + psi* g0 psi, differentiated with the Leibniz rule.
    """
    rep = state.rep
    g0 = rep.gamma[0]
    P = [state.psi]
    V = [state.v, state.vt]
    for k in range(order):
        src = sum(comb(k, j) * V[j] * P[k - j] for j in range(k + 1))
        P.append(dirac_operator_spatial(rep, ops, P[k], state.M) - 1j * apply_matrix(g0, src))
        if len(V) < order + 1:
            fv = sum(comb(k, j) * dagger_dot(P[j], g0, P[k - j]) for j in range(k + 1))
            V.append(ops.lap(V[k]) - V[k] + fv.real)
    return P[: order + 1], V[: order + 1]


def bilinear_g0(rep: GammaRep, psi) -> np.ndarray:
    """psi* gamma^0 psi; real for Hermitian gamma^0."""
    return dagger_dot(psi, rep.gamma[0], psi)


def gamma0_density(rep: GammaRep, psi) -> np.ndarray:
    """Real field psi* gamma^0 psi summed over the diagonal of gamma^0."""
    d = np.diag(rep.gamma[0]).real
    out = d[0] * (psi[0].real ** 2 + psi[0].imag ** 2)
    for i in range(1, rep.N0):
        out += d[i] * (psi[i].real ** 2 + psi[i].imag ** 2)
    return out


# --------------------------------------------------------------------------
# vector fields on jets


def field_names(n: int) -> list:
    """The ordered family (d_alpha, L_a, Omega_ab) of commuting fields."""
    names = [f"d{a}" for a in range(n + 1)]
    names += [f"L{a}" for a in range(1, n + 1)]
    names += [f"O{a}{b}" for a, b in itertools.combinations(range(1, n + 1), 2)]
    return names


def boost_names(n: int) -> list:
    """The family Z = (L_a, Omega_ab)."""
    return field_names(n)[n + 1 :]


def _times_t(jet, t):
    """Jet of t*u from the jet of u."""
    return [t * jet[k] + (k * jet[k - 1] if k else 0) for k in range(len(jet))]


def apply_vector_field(
    name: str,
    jet: list,
    t: float,
    ops: SpatialOps,
    rep: GammaRep | None = None,
    hat: bool = False,
) -> list:
    """Apply one vector field to a jet.

    ``name`` is one of d0, d1.., L1.., Oab, L0.  With ``hat=True`` the
    spinor corrections  hatL_a = L_a - g0 g^a / 2  and
    hatOmega_ab = Omega_ab - g^a g^b / 2  are added (``rep`` required).
    Fields containing d_t return a jet one order shorter.
    """
    if hat and (rep is None or jet[0].ndim != ops.grid.n + 1):
        raise ValueError("hatted fields act on spinor fields only")
    x = ops.grid.x
    lead = (1,) * (jet[0].ndim - ops.grid.n)
    xa = lambda a: x[a - 1].reshape(lead + x[a - 1].shape)  # noqa: E731
    if name == "d0":
        return jet[1:]
    if name.startswith("d"):
        a = int(name[1:])
        return [ops.d(f, a) for f in jet]
    if name == "L0":
        # (L0 u)^(k) = t u^(k+1) + k u^(k) + x^a d_a u^(k)
        out = []
        for k in range(len(jet) - 1):
            val = t * jet[k + 1] + k * jet[k]
            for a in range(1, ops.grid.n + 1):
                val = val + xa(a) * ops.d(jet[k], a)
            out.append(val)
        return out
    if name.startswith("L"):
        a = int(name[1:])
        # (L_a u)^(k) = x_a u^(k+1) + t d_a u^(k) + k d_a u^(k-1)
        du = [ops.d(f, a) for f in jet[:-1]]
        out = []
        for k in range(len(jet) - 1):
            val = xa(a) * jet[k + 1] + t * du[k]
            if k:
                val = val + k * du[k - 1]
            if hat:
                val = val - 0.5 * apply_matrix(rep.alpha[a - 1], jet[k])
            out.append(val)
        return out
    if name.startswith("O"):
        a, b = int(name[1]), int(name[2])
        out = []
        for f in jet:
            val = xa(a) * ops.d(f, b) - xa(b) * ops.d(f, a)
            if hat:
                val = val - 0.5 * apply_matrix(rep.spin(a, b), f)
            out.append(val)
        return out
    raise ValueError(f"unknown vector field {name!r}")


def multi_indices(n0: int, order: int) -> list:
    """All I in N^{n0} with |I| <= order, sorted by length."""
    out = []
    for m in range(order + 1):
        for combo in itertools.combinations_with_replacement(range(n0), m):
            I = [0] * n0
            for c in combo:
                I[c] += 1
            out.append(tuple(I))
    return out


def gamma_powers(jet, t, ops, order, names, rep=None, hat=False) -> dict:
    """Gamma^I u for all |I| <= order, Gamma^I = prod_k Gamma_k^{i_k} with the
    rightmost factor applied first.  Returns {I: jet}."""
    out = {}
    for I in multi_indices(len(names), order):
        if sum(I) == 0:
            out[I] = jet
            continue
        k = next(i for i, c in enumerate(I) if c)
        inner = list(I)
        inner[k] -= 1
        out[I] = apply_vector_field(names[k], out[tuple(inner)], t, ops, rep, hat)
    return out


def good_derivative(jet, ops: SpatialOps, a: int) -> np.ndarray:
    """G_a u = d_a u + (x_a/r) d_t u; zero on the origin mask."""
    eta = ops.grid.eta[a - 1]
    lead = (1,) * (jet[0].ndim - ops.grid.n)
    g = ops.d(jet[0], a) + eta.reshape(lead + eta.shape) * jet[1]
    mask = ops.grid.origin_mask.reshape(lead + eta.shape)
    return np.where(mask, 0.0, g)


def good_derivative_norm2(jet, ops: SpatialOps) -> np.ndarray:
    """|G u|^2 summed over a (and over spinor components)."""
    tot = 0.0
    for a in range(1, ops.grid.n + 1):
        g = np.abs(good_derivative(jet, ops, a)) ** 2
        tot = tot + (np.sum(g, axis=0) if g.ndim > ops.grid.n else g)
    return tot


# --------------------------------------------------------------------------
# checkpoints

_MAGIC = b"DKGF"
_HEADER = struct.Struct("<4sIIIdd16sI")


def save_fields(path, grid: GridSpec, t: float, kind: str, arrays: dict, M: float = 0.0) -> None:
    """Write named arrays with a fixed header.

    Layout (little endian): magic 'DKGF', version u32, n u32, points u32,
    L f64, t f64, kind (16 bytes, NUL padded), count u32; then for each array:
    name length u32, name bytes, dtype code (c16 or f8, 3 bytes), ncomp u32,
    element count u64, raw C-order data.  The mass M is stored as a scalar array named 'M'.
    """
    items = dict(arrays)
    items["M"] = np.array([M], dtype=float)
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(_MAGIC, 1, grid.n, grid.points, grid.L, t, kind.encode()[:16], len(items)))
        for name, a in items.items():
            a = np.ascontiguousarray(a)
            code = b"c16" if np.iscomplexobj(a) else b"f8 "
            a = a.astype(complex if code == b"c16" else float)
            nb = name.encode()
            ncomp = a.size // int(np.prod(grid.shape)) if a.size >= np.prod(grid.shape) else 0
            fh.write(struct.pack("<I", len(nb)) + nb + code + struct.pack("<IQ", ncomp, a.size))
            fh.write(a.tobytes())


def load_fields(path):
    """Inverse of :func:`save_fields`: (grid, t, kind, arrays, M)."""
    with open(path, "rb") as fh:
        magic, version, n, points, L, t, kind, count = _HEADER.unpack(fh.read(_HEADER.size))
        if magic != _MAGIC:
            raise ValueError(f"{path}: not a field checkpoint")
        grid = GridSpec(n, points, L)
        arrays = {}
        for _ in range(count):
            (ln,) = struct.unpack("<I", fh.read(4))
            name = fh.read(ln).decode()
            code = fh.read(3)
            ncomp, size = struct.unpack("<IQ", fh.read(12))
            dt = complex if code == b"c16" else float
            a = np.frombuffer(fh.read(size * np.dtype(dt).itemsize), dtype=dt).copy()
            if ncomp == 1:
                a = a.reshape(grid.shape)
            elif ncomp > 1:
                a = a.reshape((ncomp,) + grid.shape)
            arrays[name] = a
    M = float(arrays.pop("M")[0])
    return grid, t, kind.rstrip(b"\0").decode(), arrays, M


def save_state(path, state: SimState) -> None:
    arrays = {"psi": state.psi, "v": state.v, "vt": state.vt}
    if state.Psi is not None:
        arrays.update(Psi=state.Psi, Psit=state.Psit)
    save_fields(path, state.grid, state.t, "state", arrays, M=state.M)


def load_state(path) -> SimState:
    grid, t, kind, arrays, M = load_fields(path)
    if kind != "state":
        raise ValueError(f"{path}: expected a state checkpoint, found {kind!r}")
    return SimState(t=t, M=M, grid=grid, **arrays)
