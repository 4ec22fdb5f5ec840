"""Free propagators as Fourier multipliers and the scattering diagnostics.

Dirac:  d_t psi = -g0 g^a d_a psi + i M g0 psi, i.e. psi^(t) = exp(i t H(k)) psi^
with the Hermitian symbol H(k) = -g0 g^a k_a + M g0.  Since H^2 = E^2 I with
E = (|k|^2 + M^2)^1/2, exp(i t H) = cos(tE) I + i sin(tE)/E H.

Klein-Gordon (mass 1), acting on (v, d_t v) with <k> = (1 + |k|^2)^1/2:
    [[cos t<k>, sin t<k> / <k>], [-<k> sin t<k>, cos t<k>]].

The interaction picture pulls the state back to t = 2:
    Phi(T) = S(2 - T) psi(T),   Phi(T2) - Phi(T1) = -i int_T1^T2 S(2 - tau) g0 F_psi dtau,
and the Duhamel tails on a dyadic ladder measure how fast Phi settles.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from .clifford import apply_matrix, build_gamma, dagger_dot, spinor_norm2
from .fields import SpatialOps, gamma0_density, time_derivative_onshell
from .foliation import CoverageError, lagrange4, r_of_s
from .functionals import exterior_weight
from .solver import Monitor
from .transforms import F_psi_tilde_local, F_v_tilde_local, _first_table, check_scope, psi_tilde


class GridMismatchError(ValueError):
    """Data does not live on the propagator's grid."""


class FreePropagator:
    """Mode-wise free flow on a grid.

    ``method='closed'`` uses the closed form above; ``method='eig'``
    exponentiates the per-mode Hermitian symbol by eigen-decomposition.
    """

    def __init__(self, grid, kind: str = "dirac", M: float = 0.0, method: str = "closed", workers=None):
        if kind not in ("dirac", "kg"):
            raise ValueError("kind must be 'dirac' or 'kg'")
        if method not in ("closed", "eig"):
            raise ValueError("method must be 'closed' or 'eig'")
        self.grid, self.kind, self.M, self.method = grid, kind, float(M), method
        self.ops = SpatialOps(grid, workers=workers)
        self.rep = build_gamma(grid.n)
        k2 = grid.k2
        if kind == "dirac":
            self.E = np.sqrt(k2 + self.M**2)
        else:
            self.E = np.sqrt(1 + k2)

    # ---- symbols
    def symbol_apply(self, ph):
        """H(k) applied to a Fourier-space spinor."""
        out = np.zeros_like(ph)
        for a, ka in enumerate(self.grid.k):
            out -= apply_matrix(self.rep.alpha[a], ka * ph)
        if self.M:
            out += self.M * apply_matrix(self.rep.gamma[0], ph)
        return out

    def symbol_matrices(self):
        """H(k) per mode, shape (*grid.shape, N0, N0)."""
        rep = self.rep
        H = np.zeros(self.grid.shape + (rep.N0, rep.N0), dtype=complex)
        for a, ka in enumerate(self.grid.k):
            H -= np.broadcast_to(ka, self.grid.shape)[..., None, None] * rep.alpha[a]
        H += self.M * rep.gamma[0]
        return H

    def mode_matrices(self, t):
        """exp(i t H(k)) per mode via eigh (Dirac) or the KG block (kg)."""
        if self.kind == "kg":
            c, s, E = np.cos(t * self.E), np.sin(t * self.E), self.E
            return np.stack([np.stack([c, s / E], -1), np.stack([-E * s, c], -1)], -2)
        if getattr(self, "_eig", None) is None:
            self._eig = np.linalg.eigh(self.symbol_matrices())
        w, U = self._eig
        ph = np.exp(1j * t * w)
        return np.einsum("...ij,...j,...kj->...ik", U, ph, U.conj())

    # ---- flows in Fourier space
    def apply_hat(self, t, data_hat):
        if self.kind == "dirac":
            if self.method == "eig":
                U = self.mode_matrices(t)
                return np.moveaxis(np.einsum("...ij,...j->...i", U, np.moveaxis(data_hat, 0, -1)), -1, 0)
            c = np.cos(t * self.E)
            sE = t * np.sinc(t * self.E / np.pi)  # sin(tE)/E, finite at E = 0
            return c * data_hat + 1j * sE * self.symbol_apply(data_hat)
        a, b = data_hat
        c, s, E = np.cos(t * self.E), np.sin(t * self.E), self.E
        return np.array([c * a + s / E * b, -E * s * a + c * b])

    def __call__(self, t, data):
        self._check(data)
        if self.kind == "dirac":
            return self.ops.ifft(self.apply_hat(t, self.ops.fft(data)))
        a, b = data
        out = self.apply_hat(t, np.array([self.ops.fft(a), self.ops.fft(b)]))
        return np.array([self.ops.ifft(out[0]).real, self.ops.ifft(out[1]).real])

    def _check(self, data):
        if np.shape(data)[-self.grid.n:] != self.grid.shape:
            raise GridMismatchError(f"data shape {np.shape(data)} does not match grid {self.grid.shape}")

    # ---- norms, from Fourier coefficients
    def norm_hat(self, data_hat) -> float:
        """L^2 norm (dirac) or (int |grad a|^2 + a^2 + b^2)^1/2 (kg)."""
        scale = self.grid.cell / self.grid.points**self.grid.n
        if self.kind == "dirac":
            return math.sqrt(scale * float(np.sum(np.abs(data_hat) ** 2)))
        a, b = data_hat
        return math.sqrt(scale * float(np.sum(self.E**2 * np.abs(a) ** 2 + np.abs(b) ** 2)))

    def norm(self, data) -> float:
        if self.kind == "dirac":
            return self.norm_hat(self.ops.fft(data))
        return self.norm_hat(np.array([self.ops.fft(data[0]), self.ops.fft(data[1])]))


def free_evolve(kind: str, data, t: float, grid=None, M: float = 0.0, method: str = "closed"):
    """Free evolution of Dirac data psi or KG data (v, d_t v) by time t."""
    if grid is None:
        raise GridMismatchError("a grid is required")
    return FreePropagator(grid, kind, M, method)(t, data)


# --------------------------------------------------------------------------
# nonlinearities and the evolving state in the chosen picture


def sources(state, ops, transformed: bool, coupling: bool = True):
    """(U_psi, (U_v, U_vt), F_psi, F_v) for the plain or transformed system.
    Without coupling the nonlinearities vanish identically."""
    rep = state.rep
    if not coupling:
        return state.psi, (state.v, state.vt), np.zeros_like(state.psi), np.zeros(state.grid.shape)
    if not transformed:
        return state.psi, (state.v, state.vt), state.v * state.psi, gamma0_density(rep, state.psi)
    check_scope(state.grid.n, state.M)
    psit, _ = time_derivative_onshell(state, ops)
    P, V = _first_table(state, ops, psit)
    Fp = F_psi_tilde_local(rep, P, V)
    Fv = F_v_tilde_local(rep, P, V)
    pt = psi_tilde(state, ops)
    rho_t = 2 * dagger_dot(state.psi, rep.gamma[0], psit).real
    vt = state.v - gamma0_density(rep, state.psi)
    return pt, (vt, state.vt - rho_t), Fp, Fv


def source_density(state, ops, transformed: bool, coupling: bool = True) -> np.ndarray:
    """Pointwise (|F_psi| + |F_v|)^2."""
    _, _, Fp, Fv = sources(state, ops, transformed, coupling)
    return (np.sqrt(spinor_norm2(Fp)) + np.abs(Fv)) ** 2


# --------------------------------------------------------------------------
# split integrals of the tail bound


def _ladder_index(ladder, t, tol):
    for j, T in enumerate(ladder):
        if abs(t - T) <= tol:
            return j
    return None


class HyperboloidStrip:
    """Interior integral of a density over the flat strip T1 <= t <= T2,
    parametrised by hyperboloids:

        int_{sqrt T1}^{T2} s^(1+2 delta) int_{H_s, r < r(s), T1 <= t(x) <= T2} f dx ds.

    Node values come from the cubic in time through the four most recent
    snapshots seen by ``push``; only node indices and times are stored.
    """

    def __init__(self, grid, T1, T2, delta, s_points=48):
        self.grid, self.T1, self.T2, self.delta = grid, float(T1), float(T2), delta
        self.s = np.linspace(math.sqrt(T1), T2, s_points)
        r = grid.r.ravel()
        self.nodes = []
        for s in self.s:
            rmax = min(float(r_of_s(s)), math.sqrt(max(T2**2 - s**2, 0.0)))
            rmin = math.sqrt(max(T1**2 - s**2, 0.0))
            idx = np.flatnonzero((r < rmax) & (r >= rmin) & (r < grid.L - 4 * grid.dx))
            tx = np.sqrt(s**2 + r[idx] ** 2)
            o = np.argsort(tx, kind="stable")
            self.nodes.append([idx[o], tx[o], 0])
        self.sums = np.zeros(len(self.s))
        self._recent = []

    def _fill(self, upto, final=False):
        times = np.array([t for t, _ in self._recent])
        for k, node in enumerate(self.nodes):
            idx, tx, p = node
            q = int(np.searchsorted(tx, upto, side="right" if final else "left"))
            if q <= p:
                continue
            w = lagrange4(tx[p:q], times)
            vals = sum(w[i] * self._recent[i][1][idx[p:q]] for i in range(4))
            self.sums[k] += float(np.sum(vals)) * self.grid.cell
            node[2] = q

    def push(self, t, f):
        self._recent.append((t, np.asarray(f).ravel()))
        if len(self._recent) > 4:
            self._recent.pop(0)
        if len(self._recent) == 4:
            self._fill(self._recent[2][0])

    def close(self, slack: float = 0.0):
        """Fill the remaining nodes up to the last snapshot time plus slack
        (half a step absorbs the rounding of the final time)."""
        if len(self._recent) == 4:
            self._fill(self._recent[3][0] + slack + 1e-9, final=True)

    @property
    def complete(self) -> bool:
        return all(p == len(tx) for _, tx, p in self.nodes)

    def value(self) -> float:
        if not self.complete:
            return float("nan")
        return float(np.trapezoid(self.sums * self.s ** (1 + 2 * self.delta), self.s))


def flat_split_rates(grid, tau, f, delta):
    """(exterior, interior) rates at time tau of the flat split integrals:
    tau^(1+delta) int_{r>=tau-1} f  and  int_{r<tau-1} f s^(2 delta) tau."""
    w = exterior_weight(grid, tau)
    ex = tau ** (1 + delta) * grid.integrate(w * f)
    s = np.sqrt(np.maximum(tau**2 - grid.r**2, 0.0))
    inn = grid.integrate((1 - w) * f * s ** (2 * delta) * tau)
    return ex, inn


class SplitMonitor(Monitor):
    """A_ex, A_in (flat change of variables) and A_in on hyperboloids for
    consecutive windows of a ladder, for a density ``F(state) -> |F|^2``."""

    def __init__(self, ladder, F, delta=0.05, hyperboloids=True, s_points=48):
        self.ladder = [float(T) for T in ladder]
        self.F, self.delta = F, delta
        self.use_h, self.s_points = hyperboloids, s_points
        nd = len(self.ladder) - 1
        self.A_ex, self.A_in, self.A_in_h = [0.0] * nd, [0.0] * nd, [float("nan")] * nd
        self._prev = None

    def setup(self, grid, dt):
        self.grid = grid
        self.tol = 0.5 * dt + 1e-12
        self.strips = []
        if self.use_h:
            self.strips = [HyperboloidStrip(grid, a, b, self.delta, self.s_points)
                           for a, b in zip(self.ladder, self.ladder[1:])]

    def start(self, state, ctx):
        self.setup(state.grid, ctx.config.dt)
        self.step(state, ctx)

    def step(self, state, ctx, f=None):
        t = state.t
        if t < self.ladder[0] - 3 * ctx.config.dt or t > self.ladder[-1] + 3 * ctx.config.dt:
            self._prev = None
            return
        f = self.F(state) if f is None else f
        for st in self.strips:
            if st.T1 - 3 * ctx.config.dt <= t <= st.T2 + 3 * ctx.config.dt:
                st.push(t, f)
        if not (self.ladder[0] - self.tol <= t <= self.ladder[-1] + self.tol):
            return
        rates = flat_split_rates(self.grid, t, f, self.delta)
        if self._prev is not None:
            tp, rp = self._prev
            k = int(np.searchsorted(self.ladder, tp + self.tol, side="right")) - 1
            h = t - tp
            self.A_ex[k] += 0.5 * h * (rp[0] + rates[0])
            self.A_in[k] += 0.5 * h * (rp[1] + rates[1])
        self._prev = (t, rates)

    def finish(self, ctx):
        for k, st in enumerate(self.strips):
            st.close(self.tol)
            self.A_in_h[k] = st.value()


class TailMonitor(Monitor):
    """Duhamel tails on a dyadic ladder, the direct free-flow comparison and
    the exterior/interior split integrals.

    Per window [T_j, T_j+1]:
      tail    = ||int S(2-tau)(-i g0 F_psi)||_L2 + ||int S~(2-tau)(0, F_v)||_{H1 x L2}
      direct  = ||U(T_j+1) - S(T_j+1 - T_j) U(T_j)|| in the same norms
      A_ex    = int ||F||^2_{r >= tau-1} tau^(1+delta) dtau
      A_in    = int int_{r < tau-1} |F|^2 s^(2 delta) tau dx dtau,  s = (tau^2 - r^2)^1/2
      A_in_h  = A_in computed on hyperboloids (HyperboloidStrip)
    with F = |F_psi| + |F_v|.
    """

    def __init__(self, ladder=(5.0, 10.0, 20.0, 40.0), delta: float = 0.05, transformed: bool = False,
                 split: bool = True, hyperboloids: bool = True, s_points: int = 48):
        self.ladder = [float(T) for T in ladder]
        self.delta, self.transformed = delta, transformed
        nd = len(self.ladder) - 1
        self.tail = [0.0] * nd
        self.direct = [0.0] * nd
        self.seen = []
        self.split = SplitMonitor(self.ladder, None, delta, hyperboloids, s_points) if split else None
        self._U = {}
        self._acc_p = self._acc_v = None
        self._prev = None

    def start(self, state, ctx):
        grid = state.grid
        self.grid, self.ops = grid, ctx.ops
        self.SD = FreePropagator(grid, "dirac", state.M)
        self.SK = FreePropagator(grid, "kg")
        self.tol = 0.5 * ctx.config.dt + 1e-12
        self.rep = state.rep
        sysm = getattr(ctx, "system", None)
        self.coupling = getattr(sysm, "coupling", True)
        if self.split is not None:
            self.split.F = lambda st: source_density(st, self.ops, self.transformed, self.coupling)
            self.split.setup(grid, ctx.config.dt)
        self.step(state, ctx)

    def _integrand_hat(self, tau, Fp, Fv):
        g = -1j * apply_matrix(self.rep.gamma[0], Fp)
        ip = self.SD.apply_hat(2 - tau, self.ops.fft(g))
        zero = np.zeros(self.grid.shape, dtype=complex)
        iv = self.SK.apply_hat(2 - tau, np.array([zero, self.ops.fft(Fv)]))
        return ip, iv

    def step(self, state, ctx):
        t = state.t
        margin = 3 * ctx.config.dt
        if t < self.ladder[0] - margin or t > self.ladder[-1] + margin:
            return
        Up, Uv, Fp, Fv = sources(state, self.ops, self.transformed, self.coupling)
        if self.split is not None:
            self.split.step(state, ctx, f=(np.sqrt(spinor_norm2(Fp)) + np.abs(Fv)) ** 2)
        if not (self.ladder[0] - self.tol <= t <= self.ladder[-1] + self.tol):
            return
        ip, iv = self._integrand_hat(t, Fp, Fv)
        if self._prev is not None and self._acc_p is not None:
            tp, ipp, ivp = self._prev
            h = t - tp
            self._acc_p += 0.5 * h * (ipp + ip)
            self._acc_v += 0.5 * h * (ivp + iv)
        j = _ladder_index(self.ladder, t, self.tol)
        if j is not None:
            self._U[j] = (t, Up.copy(), np.array(Uv))
            # a window is complete only if its start was seen (resumed runs)
            if j > 0 and (j - 1) in self._U:
                k = j - 1
                self.tail[k] = self.SD.norm_hat(self._acc_p) + self.SK.norm_hat(self._acc_v)
                tk, Up_k, Uv_k = self._U[k]
                dp = Up - self.SD(t - tk, Up_k)
                dv = np.array(Uv) - self.SK(t - tk, Uv_k)
                self.direct[k] = self.SD.norm(dp) + self.SK.norm(dv)
                self.seen.append(k)
                del self._U[k]
            self._acc_p = np.zeros_like(ip)
            self._acc_v = np.zeros_like(iv)
        self._prev = (t, ip, iv)

    def finish(self, ctx):
        if self.split is not None:
            self.split.finish(ctx)

    # ---- reporting
    def constants(self) -> list:
        """C_j = tail_j / (T_j^(-delta/2) (A_ex^1/2 + A_in^1/2)) per completed window."""
        if self.split is None:
            return []
        out = []
        for j in self.seen:
            den = self.ladder[j] ** (-self.delta / 2) * (
                math.sqrt(self.split.A_ex[j]) + math.sqrt(self.split.A_in[j]))
            out.append(self.tail[j] / den if den > 0 else float("nan"))
        return out

    def tail_rate(self) -> float | None:
        """Fitted exponent of the tails against the window start times."""
        js = [j for j in self.seen if self.tail[j] > 0]
        if len(js) < 2:
            return None
        T = np.log([self.ladder[j] for j in js])
        e = np.log([self.tail[j] for j in js])
        return float(np.polyfit(T, e, 1)[0])

    def ratios(self) -> list:
        tails = [self.tail[j] for j in self.seen]
        return [b / a if a > 0 else float("nan") for a, b in zip(tails, tails[1:])]

    def report(self) -> dict:
        sp = self.split
        pick = (lambda xs: [xs[j] for j in self.seen]) if sp is not None else (lambda xs: None)
        return {
            "ladder": self.ladder,
            "transformed": self.transformed,
            "delta": self.delta,
            "windows": [[self.ladder[j], self.ladder[j + 1]] for j in self.seen],
            "tail": [self.tail[j] for j in self.seen],
            "direct": [self.direct[j] for j in self.seen],
            "ratios": self.ratios(),
            "A_ex": pick(sp.A_ex) if sp else None,
            "A_in": pick(sp.A_in) if sp else None,
            "A_in_hyperboloid": pick(sp.A_in_h) if sp else None,
            "C": self.constants(),
            "tail_rate": self.tail_rate(),
            "truncation_estimate": self.tail[self.seen[-1]] if self.seen else None,
        }

    def monotone(self) -> bool:
        tails = [self.tail[j] for j in self.seen]
        return all(b < a for a, b in zip(tails, tails[1:]))


class _ReplayCtx:
    def __init__(self, history, ops):
        states = list(history.states)

        class _Cfg:
            dt = history.spacing

        self.config, self.ops, self.step_index = _Cfg, ops or SpatialOps(states[0].grid), 0
        self.states = states


def _drive(mon, history, ops=None):
    ctx = _ReplayCtx(history, ops)
    mon.start(ctx.states[0], ctx)
    for st in ctx.states[1:]:
        ctx.step_index += 1
        mon.step(st, ctx)
    mon.finish(ctx)
    return mon


def interaction_tail(history, ladder, transformed=False, delta=0.05, ops=None) -> dict:
    """Tails from a stored full-rate history (see TailMonitor)."""
    return _drive(TailMonitor(ladder, delta, transformed, split=False), history, ops).report()


@dataclass
class SplitResult:
    A_ex: float
    A_in: float
    A_in_hyperboloid: float | None = None

    def bound(self, T1, delta) -> float:
        return T1 ** (-delta / 2) * (math.sqrt(self.A_ex) + math.sqrt(self.A_in))


def exterior_interior_split(history, F, T1: float, T2: float, delta: float = 0.05, s_points: int = 48,
                            hyperboloid: bool = True) -> SplitResult:
    """The two integrals bounding the flat tail over [T1, T2] for a density
    ``F(state) -> |F|^2`` on a stored full-rate history."""
    tt = history.times()
    if len(tt) < 4 or tt[0] > T1 + 1e-9 or tt[-1] < T2 - 1e-9:
        raise CoverageError((T1, T2), (tt[0], tt[-1]) if len(tt) else (np.nan, np.nan))
    for T in (T1, T2):
        if np.min(np.abs(tt - T)) > 1e-6 * max(1.0, abs(T)) + 1e-9:
            raise ValueError(f"T={T} is not a stored time")
    mon = _drive(SplitMonitor([T1, T2], F, delta, hyperboloid, s_points), history)
    return SplitResult(mon.A_ex[0], mon.A_in[0], mon.A_in_h[0] if hyperboloid else None)


def write_scattering_json(path, report: dict) -> None:
    with open(path, "w") as fh:
        json.dump(report, fh, indent=2)
