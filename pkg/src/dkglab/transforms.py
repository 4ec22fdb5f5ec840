"""Nonlinear transforms of the 2D massless system and the null-form and
decay-extraction bounds, as residuals on simulated or manufactured fields.

    psi~ = psi - i g^mu d_mu (v psi)     i g d psi~ = F~_psi
    v~   = v - psi* g0 psi               -Box v~ + v~ = F~_v
    Box Psi = v psi, (Psi, d_t Psi)(2) = (0, -i g0 psi_0)  =>  psi = i g d Psi
    Psi~ = Psi - v psi                   Box Psi~ = F~_psi

with
    F~_psi = (psi* g0 psi) psi - i v g^mu d_mu (v psi) - 2 d_a v d^a psi
    F~_v   = -i d_mu (v psi*) g0 g^mu psi + i psi* g0 g^mu d_mu (v psi)
             + 2 d_a psi* g0 d^a psi
and d_a u d^a w = -u_t w_t + grad u . grad w.

Pointwise routines take derivative tables: dicts keyed by () for the value,
(mu,) for first and (mu, nu) with mu <= nu for second derivatives, index 0
being time.  Grid routines take time derivatives of the transformed fields
from 5-point stencils on stored snapshots.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .clifford import GammaRep, apply_matrix, dagger_dot, spinor_norm2
from .fields import SpatialOps, field_names, gamma_powers, onshell_jets, time_derivative_onshell
from .solver import Monitor, pde_residual, stencil_d1, stencil_d2


class TransformScopeError(ValueError):
    """The transforms are stated for n = 2 and M = 0 only."""


def check_scope(n: int, M: float) -> None:
    if n != 2 or M != 0:
        raise TransformScopeError(f"the nonlinear transforms require n=2, M=0 (got n={n}, M={M})")


# --------------------------------------------------------------------------
# pointwise algebra on derivative tables


def _key(mu, nu):
    return (mu, nu) if mu <= nu else (nu, mu)


def _sig(mu):
    """Metric signature entry g^{mu mu}."""
    return -1.0 if mu == 0 else 1.0


def product_table(V: dict, P: dict, order: int) -> dict:
    """Leibniz table of v psi up to the given order."""
    out = {(): V[()] * P[()]}
    n1 = len([k for k in V if len(k) == 1])
    for mu in range(n1):
        out[(mu,)] = V[(mu,)] * P[()] + V[()] * P[(mu,)]
    if order >= 2:
        for mu in range(n1):
            for nu in range(mu, n1):
                k = (mu, nu)
                out[k] = V[k] * P[()] + V[(mu,)] * P[(nu,)] + V[(nu,)] * P[(mu,)] + V[()] * P[k]
    return out


def dirac_op(rep: GammaRep, T: dict) -> np.ndarray:
    """i g^mu d_mu applied through a first-order table."""
    return sum(1j * apply_matrix(rep.gamma[mu], T[(mu,)]) for mu in range(rep.n + 1))


def null_pair(A: dict, B: dict, n: int):
    """d_a A d^a B from first-order tables (A scalar, B scalar or spinor)."""
    return sum(_sig(mu) * A[(mu,)] * B[(mu,)] for mu in range(n + 1))


def F_psi_tilde_local(rep: GammaRep, P: dict, V: dict) -> np.ndarray:
    n = rep.n
    rho = dagger_dot(P[()], rep.gamma[0], P[()]).real
    VP = product_table(V, P, 1)
    return rho * P[()] - V[()] * dirac_op(rep, VP) - 2 * null_pair(V, P, n)


def F_v_tilde_local(rep: GammaRep, P: dict, V: dict, check: bool = True) -> np.ndarray:
    """F~_v as the complex sum of its three terms; its imaginary part must
    cancel, which is asserted when ``check``."""
    n, g = rep.n, rep.gamma
    psi = P[()]
    VP = product_table(V, P, 1)
    g0g = [g[0] @ g[mu] for mu in range(n + 1)]
    t1 = sum(-1j * dagger_dot(VP[(mu,)], g0g[mu], psi) for mu in range(n + 1))
    t2 = sum(1j * dagger_dot(psi, g0g[mu], VP[(mu,)]) for mu in range(n + 1))
    t3 = 2 * sum(_sig(mu) * dagger_dot(P[(mu,)], g[0], P[(mu,)]) for mu in range(n + 1))
    F = t1 + t2 + t3
    if check:
        scale = float(np.max(np.abs(t1) + np.abs(t2) + np.abs(t3)))
        if scale and np.max(np.abs(F.imag)) > 1e-12 * scale:
            raise FloatingPointError("F~_v acquired an imaginary part")
    return F.real


def dirac_defect_local(rep, P, V, M=0.0):
    """i g d psi + M psi - v psi."""
    return dirac_op(rep, P) + M * P[()] - V[()] * P[()]


def kg_defect_local(rep, P, V):
    """-Box v + v - psi* g0 psi."""
    n = rep.n
    box = -V[(0, 0)] + sum(V[(a, a)] for a in range(1, n + 1))
    return -box + V[()] - dagger_dot(P[()], rep.gamma[0], P[()]).real


def psi_tilde_residual_local(rep: GammaRep, P: dict, V: dict) -> np.ndarray:
    """i g d psi~ - F~_psi from second-order tables of psi and v."""
    n = rep.n
    VP = product_table(V, P, 2)
    lhs = dirac_op(rep, P)
    # i g^mu d_mu (-i g^nu d_nu (v psi)) = g^mu g^nu d_mu d_nu (v psi)
    for mu in range(n + 1):
        for nu in range(n + 1):
            lhs = lhs + apply_matrix(rep.gamma[mu] @ rep.gamma[nu], VP[_key(mu, nu)])
    return lhs - F_psi_tilde_local(rep, P, V)


def v_tilde_residual_local(rep: GammaRep, P: dict, V: dict) -> np.ndarray:
    """-Box v~ + v~ - F~_v from second-order tables."""
    n, g0 = rep.n, rep.gamma[0]

    def rho2(mu, nu):
        k = _key(mu, nu)
        val = dagger_dot(P[k], g0, P[()]) + dagger_dot(P[()], g0, P[k])
        val = val + dagger_dot(P[(mu,)], g0, P[(nu,)]) + dagger_dot(P[(nu,)], g0, P[(mu,)])
        return val.real

    rho = dagger_dot(P[()], g0, P[()]).real
    vt_tt = V[(0, 0)] - rho2(0, 0)
    lap = sum(V[(a, a)] - rho2(a, a) for a in range(1, n + 1))
    return vt_tt - lap + (V[()] - rho) - F_v_tilde_local(rep, P, V)


# --------------------------------------------------------------------------
# grid evaluation


def _first_table(state, ops, psit=None):
    """First-order tables of psi and v on the grid, d_t psi on-shell."""
    if psit is None:
        psit, _ = time_derivative_onshell(state, ops)
    P = {(): state.psi, (0,): psit}
    V = {(): state.v, (0,): state.vt}
    for a in range(1, state.grid.n + 1):
        P[(a,)] = ops.d(state.psi, a)
        V[(a,)] = ops.d(state.v, a)
    return P, V


def psi_tilde(state, ops) -> np.ndarray:
    rep = state.rep
    P, V = _first_table(state, ops)
    VP = product_table(V, P, 1)
    return state.psi - dirac_op(rep, VP)


def v_tilde(state) -> np.ndarray:
    rep = state.rep
    rho = dagger_dot(state.psi, rep.gamma[0], state.psi)
    scale = float(np.max(np.abs(state.psi) ** 2))
    if scale and np.max(np.abs(rho.imag)) > 1e-13 * scale:
        raise FloatingPointError("psi* g0 psi acquired an imaginary part")
    return state.v - rho.real


def _l2(grid, f):
    f = np.abs(f) ** 2
    if f.ndim > grid.n:
        f = np.sum(f, axis=0)
    return float(np.sqrt(grid.integrate(f)))


def _stencil(history, t):
    sts = history.stencil(t)
    c = sts[2]
    check_scope(c.grid.n, c.M)
    return sts, c


def build_psi_tilde(history, t, ops=None):
    """(psi~ at t, ||i g d psi~ - F~_psi||, F~_psi)."""
    sts, c = _stencil(history, t)
    ops = ops or SpatialOps(c.grid)
    rep = c.rep
    pt = [psi_tilde(s, ops) for s in sts]
    dt_pt = stencil_d1(pt, history.spacing)
    lhs = 1j * apply_matrix(rep.gamma[0], dt_pt)
    for a in range(1, c.grid.n + 1):
        lhs = lhs + 1j * apply_matrix(rep.gamma[a], ops.d(pt[2], a))
    P, V = _first_table(c, ops)
    F = F_psi_tilde_local(rep, P, V)
    return pt[2], _l2(c.grid, lhs - F), F


def build_v_tilde(history, t, ops=None):
    """(v~ at t, ||-Box v~ + v~ - F~_v||, F~_v)."""
    sts, c = _stencil(history, t)
    ops = ops or SpatialOps(c.grid)
    rep = c.rep
    vt = [v_tilde(s) for s in sts]
    lhs = stencil_d2(vt, history.spacing) - ops.lap(vt[2]) + vt[2]
    P, V = _first_table(c, ops)
    F = F_v_tilde_local(rep, P, V)
    return vt[2], _l2(c.grid, lhs - F), F


def wave_potential_checks(history, t, ops=None) -> dict:
    """Relative L2 error of psi = i g d Psi and ||Box Psi~ - F~_psi|| at t."""
    sts, c = _stencil(history, t)
    if c.Psi is None:
        raise ValueError("history carries no wave potential; run with potential=True")
    ops = ops or SpatialOps(c.grid)
    rep = c.rep
    ident = c.psi - 1j * apply_matrix(rep.gamma[0], c.Psit)
    for a in range(1, c.grid.n + 1):
        ident = ident - 1j * apply_matrix(rep.gamma[a], ops.d(c.Psi, a))
    norm = _l2(c.grid, c.psi)
    Pt = [s.Psi - s.v * s.psi for s in sts]
    box = -stencil_d2(Pt, history.spacing) + ops.lap(Pt[2])
    P, V = _first_table(c, ops)
    F = F_psi_tilde_local(rep, P, V)
    return {
        "identity_abs": _l2(c.grid, ident),
        "identity_rel": _l2(c.grid, ident) / norm if norm else 0.0,
        "box_Psi_tilde": _l2(c.grid, box - F),
        "Psi_tilde": Pt[2],
    }


@dataclass
class TransformBundle:
    t: float
    psi_tilde: np.ndarray
    v_tilde: np.ndarray
    F_psi: np.ndarray
    F_v: np.ndarray
    Psi: np.ndarray | None = None
    Psi_tilde: np.ndarray | None = None
    residuals: dict = field(default_factory=dict)


def bundle(history, t, ops=None) -> TransformBundle:
    """All transformed fields and residuals at a stored time."""
    c = history[history.index_of(t)]
    ops = ops or SpatialOps(c.grid)
    pt, rp, Fp = build_psi_tilde(history, t, ops)
    vt, rv, Fv = build_v_tilde(history, t, ops)
    rb, rvb = pde_residual(history, t, ops)
    res = {"res_psi": rb, "res_v": rvb, "res_psi_tilde": rp, "res_v_tilde": rv}
    B = TransformBundle(t, pt, vt, Fp, Fv, residuals=res)
    if c.Psi is not None:
        w = wave_potential_checks(history, t, ops)
        res["res_Psi_tilde"] = w["box_Psi_tilde"]
        res["res_Psi_id"] = w["identity_abs"]
        res["Psi_id_rel"] = w["identity_rel"]
        B.Psi, B.Psi_tilde = c.Psi, w["Psi_tilde"]
    return B


class TransformMonitor(Monitor):
    """Evaluates the transform residuals at scheduled times from the ring
    buffer of recent full-rate states."""

    def __init__(self, times):
        self.targets = sorted(float(t) for t in times)
        self.results = {}
        self._last = {}

    def start(self, state, ctx):
        check_scope(state.grid.n, state.M)
        self.ops = ctx.ops

    def step(self, state, ctx):
        buf = ctx.buffer
        if len(buf) < 5:
            return
        tc = buf[len(buf) - 3].t
        for T in self.targets:
            if T not in self.results and abs(tc - T) <= 0.5 * ctx.config.dt + 1e-12:
                B = bundle(buf, tc, self.ops)
                self.results[T] = dict(B.residuals, t=tc)
                self._last = {k: v for k, v in B.residuals.items() if k.startswith("res_")}

    def row(self) -> dict:
        return dict(self._last)


def solve_wave_potential(history, times=(5.0, 10.0, 20.0), ops=None) -> dict:
    """Identity checks of the co-evolved potential at the given stored times.
    The potential itself is evolved by the solver (RunConfig.potential)."""
    out = {}
    for t in times:
        i = history.index_of(t)
        w = wave_potential_checks(history, history[i].t, ops)
        out[t] = {k: v for k, v in w.items() if k != "Psi_tilde"}
    return out


# --------------------------------------------------------------------------
# null forms and decay extraction


def _norm(f, n):
    a = np.abs(f)
    return np.sqrt(np.sum(a**2, axis=0)) if a.ndim > n else a


def _dnorm(jet, ops):
    """|d u| = (|u_t|^2 + |grad u|^2)^1/2 from a jet [u, u_t, ...]."""
    n = ops.grid.n
    tot = _norm(jet[1], n) ** 2
    for a in range(1, n + 1):
        tot = tot + _norm(ops.d(jet[0], a), n) ** 2
    return np.sqrt(tot)


@dataclass
class RatioReport:
    ratio_max: float | None
    nodes: int
    lhs: np.ndarray | None = None
    rhs: np.ndarray | None = None


def _ratio(lhs, rhs, mask) -> RatioReport:
    ok = mask & (rhs > 0)
    if not np.any(ok):
        return RatioReport(None, 0)
    return RatioReport(float(np.max(lhs[ok] / rhs[ok])), int(np.count_nonzero(ok)), lhs, rhs)


def null_form(u_jet, phi_jet, t, ops, region: str = "interior") -> RatioReport:
    """d_a u d^a phi against t^-1 sum_a (|L_a u||d phi| + |d u||L_a phi| + |t-r||d u||d phi|)."""
    grid = ops.grid
    n = grid.n
    q = -u_jet[1] * phi_jet[1]
    for a in range(1, n + 1):
        q = q + ops.d(u_jet[0], a) * ops.d(phi_jet[0], a)
    du, dphi = _dnorm(u_jet, ops), _dnorm(phi_jet, ops)
    r = grid.r
    bracket = 0.0
    for a in range(1, n + 1):
        Lu = _norm(_boost(u_jet, a, t, ops), n)
        Lp = _norm(_boost(phi_jet, a, t, ops), n)
        bracket = bracket + Lu * dphi + du * Lp + np.abs(t - r) * du * dphi
    rhs = bracket / t
    mask = grid.sup_mask & ((r < t - 1) if region == "interior" else np.ones(grid.shape, bool))
    rep = _ratio(_norm(q, n), rhs, mask)
    rep.lhs = q
    return rep


def _boost(jet, a, t, ops):
    x = ops.grid.x[a - 1]
    return x * jet[1] + t * ops.d(jet[0], a)


def decay_extraction(state, ops=None) -> dict:
    """Empirical ratios for the two pointwise bounds

        |v| vs ((2+r-t)/t) sum_{|I|<=1} |d Gamma^I v| + |-Box v + v|   (exterior, r <= 3t)
        |d psi| vs (t-r)^-1 sum_{|I|=1} |Gamma^I psi| + t (t-r)^-1 |i g d psi|   (interior)
    """
    grid, t = state.grid, state.t
    ops = ops or SpatialOps(grid)
    rep = state.rep
    n = grid.n
    r = grid.r
    P, V = onshell_jets(state, ops, 2)
    names = field_names(n)
    gv = gamma_powers(V, t, ops, 1, names)
    kg_rhs = sum(_dnorm(jet, ops) for jet in gv.values())
    box = V[2] - ops.lap(V[0]) + V[0]
    rhs_v = (2 + r - t) / t * kg_rhs + np.abs(box)
    mask_v = grid.sup_mask & (r >= t - 1) & (r <= 3 * t)
    gp = gamma_powers(P, t, ops, 1, names)
    sum_g = sum(_norm(jet[0], n) for I, jet in gp.items() if sum(I) == 1)
    dpsi = [P[1]] + [ops.d(P[0], a) for a in range(1, n + 1)]
    lhs_p = np.sqrt(sum(spinor_norm2(d) for d in dpsi))
    Dpsi = 1j * apply_matrix(rep.gamma[0], P[1])
    for a in range(1, n + 1):
        Dpsi = Dpsi + 1j * apply_matrix(rep.gamma[a], dpsi[a])
    mask_p = grid.sup_mask & (r < t - 1)
    gap = np.where(mask_p, t - r, 1.0)
    rhs_p = sum_g / gap + t / gap * _norm(Dpsi, n)
    return {"kg": _ratio(np.abs(state.v), rhs_v, mask_v), "dirac": _ratio(lhs_p, rhs_p, mask_p)}

