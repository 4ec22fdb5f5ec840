"""Energy functionals, space-time accumulators, the bootstrap density and
decay fits, evaluated on simulation output.

Exterior integrals use the node weight clip((r - (t-1))/dx + 1/2, 0, 1), a
one-cell linear ramp across the cone r = t - 1.  Its time derivative
reproduces the cone flux to second order, which is what lets the discrete
energy identities close.  Space-time integrals use the trapezoid rule over
monitor times.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage, stats

from .clifford import apply_matrix, dagger_dot, direction_operator, project_hyperbolic, spinor_norm2
from .fields import (
    SpatialOps, field_names, gamma0_density, gamma_powers, good_derivative_norm2,
    onshell_jets,
)
from .foliation import ConeAccumulator, FoliationSlice, cone_accumulate, sphere_nodes
from .solver import Monitor

SQRT2 = math.sqrt(2)


class EnergyFormMismatch(AssertionError):
    """The three expressions of the hyperboloidal energy density disagree."""


@dataclass(frozen=True)
class FunctionalParams:
    lam: float = 1.0
    delta: float = 0.05
    m: int = 1

    def __post_init__(self):
        if not self.lam > 0:
            raise ValueError("lambda must be positive")
        if self.delta < 0:
            raise ValueError("delta must be non-negative")
        if self.m not in (0, 1):
            raise ValueError("the Klein-Gordon mass flag m must be 0 or 1")

    @property
    def lam0(self) -> float:
        return 0.5 * min(self.lam, 1.0)


@dataclass
class EnergyReport:
    t: float
    values: dict = field(default_factory=dict)
    accumulators: dict = field(default_factory=dict)


# --------------------------------------------------------------------------
# weights and pointwise densities


def exterior_weight(grid, t: float) -> np.ndarray:
    """Fraction of each cell lying in r >= t - 1 (linear ramp of width dx)."""
    return np.clip((grid.r - (t - 1)) / grid.dx + 0.5, 0.0, 1.0)


def omega(z, lam):
    """Ghost weight (2 + z)^(1 + lam); zero where 2 + z <= 0."""
    b = np.maximum(2 + np.asarray(z, dtype=float), 0.0)
    return b ** (1 + lam)


def omega_prime(z, lam):
    b = np.maximum(2 + np.asarray(z, dtype=float), 0.0)
    return (1 + lam) * b**lam


def radial_minus(rep, psi, grid) -> np.ndarray:
    """[psi]_- = psi - eta_a g0 g^a psi with eta = 0 on the origin mask."""
    return psi - apply_matrix(direction_operator(rep, grid.eta), psi)


def kg_density(u, ut, grad, m) -> np.ndarray:
    return ut**2 + sum(g**2 for g in grad) + m**2 * u**2


def good_density(u, ut, ops, m) -> np.ndarray:
    """|G u|^2 + m^2 u^2 on the grid."""
    return good_derivative_norm2([u, ut], ops) + m**2 * u**2


def _get_u(state, field_):
    if isinstance(field_, str):
        if field_ != "v":
            raise ValueError("only the Klein-Gordon field 'v' is stored with its time derivative")
        return state.v, state.vt
    return field_


def exterior_flat_energy(state, params: FunctionalParams, field_="v", ops=None) -> float:
    """Integral of t^-delta (2+r-t)^(1+lam) (|du|^2 + m^2 u^2) over r >= t - 1."""
    grid, t = state.grid, state.t
    if t < 2:
        raise ValueError("exterior energies are defined for t >= 2")
    ops = ops or SpatialOps(grid)
    u, ut = _get_u(state, field_)
    w = exterior_weight(grid, t) * omega(grid.r - t, params.lam) * t ** (-params.delta)
    return grid.integrate(w * kg_density(u, ut, ops.grad(u), params.m))


def dirac_exterior_energy(state, params: FunctionalParams | None = None, psi=None) -> float:
    """Integral of (2+r-t)^(1+lam) |psi|^2 over r >= t - 1."""
    params = params or FunctionalParams()
    grid, t = state.grid, state.t
    psi = state.psi if psi is None else psi
    w = exterior_weight(grid, t) * omega(grid.r - t, params.lam)
    return grid.integrate(w * spinor_norm2(psi))


# --------------------------------------------------------------------------
# hyperboloids


def e_h_forms(u, ut, grad, x, t, s, m=1):
    """The three expressions of the hyperboloidal energy density.

    (1) |du|^2 + m^2 u^2 + 2 (x^a/t) d_t u d_a u
    (2) (s/t)^2 |d_t u|^2 + t^-2 |L u|^2 + m^2 u^2
    (3) (s/t)^2 |grad u|^2 + t^-2 |L0 u|^2 + t^-2 |Omega u|^2 + m^2 u^2
    """
    n = len(grad)
    grad = [np.asarray(g) for g in grad]
    xdu = sum(x[a] * grad[a] for a in range(n))
    g2 = sum(g**2 for g in grad)
    f1 = ut**2 + g2 + m**2 * u**2 + 2 * xdu * ut / t
    Lu2 = sum((x[a] * ut + t * grad[a]) ** 2 for a in range(n))
    f2 = (s / t) ** 2 * ut**2 + Lu2 / t**2 + m**2 * u**2
    L0 = t * ut + xdu
    Om2 = sum((x[a] * grad[b] - x[b] * grad[a]) ** 2 for a in range(n) for b in range(a + 1, n))
    f3 = (s / t) ** 2 * g2 + (L0**2 + Om2) / t**2 + m**2 * u**2
    return f1, f2, f3


def kg_slice_fields(ops: SpatialOps) -> dict:
    """Slice field recipe carrying v, d_t v and grad v."""
    return {"u": "v", "ut": "vt", "grad": lambda st: np.array(ops.grad(st.v))}


def hyperboloid_energy(sl: FoliationSlice, params: FunctionalParams, u="u", ut="ut", grad="grad",
                       tol: float = 1e-8) -> float:
    """Integral of t^-delta e^h_m[u] over the slice, after checking that the
    three forms of the density agree pointwise to ``tol`` relative."""
    if len(sl) == 0:
        return 0.0
    U, Ut, G = sl.values[u], sl.values[ut], sl.values[grad]
    f1, f2, f3 = e_h_forms(U, Ut, G, sl.x, sl.t, sl.s, params.m)
    scale = kg_density(U, Ut, G, params.m) + 1e-300
    gap = np.maximum(np.abs(f1 - f2), np.abs(f1 - f3)) / scale
    if np.max(gap) > tol:
        raise EnergyFormMismatch(f"energy density forms differ by {np.max(gap):.3e} (relative)")
    return sl.integrate(sl.t ** (-params.delta) * f2)


def dirac_hyperboloid_energy(sl: FoliationSlice, rep, psi="psi") -> float:
    """Integral of |(psi)_-|^2 + (s/t)^2 |psi|^2 over the slice."""
    if len(sl) == 0:
        return 0.0
    P = sl.values[psi]
    dens = spinor_norm2(project_hyperbolic(rep, P, sl.x, sl.t, -1)) + (sl.s / sl.t) ** 2 * spinor_norm2(P)
    return sl.integrate(dens)


# --------------------------------------------------------------------------
# cone integrands, evaluated pointwise from interpolated smooth fields


class ConeIntegrand:
    """Integrand on r = tau - 1 assembled at the sphere nodes.

    ``fields(state)`` returns real grid fields (stacked on axis 0) that are
    smooth across the origin; ``combine(values, pts, tau)`` forms the
    integrand from their interpolated values.
    """

    def __init__(self, fields, combine):
        self.fields, self.combine = fields, combine


def cone_value(grid, integrand: ConeIntegrand, state) -> float:
    radius = state.t - 1
    pts, w = sphere_nodes(grid.n, radius, grid.dx)
    stack = integrand.fields(state)
    coords = (pts + grid.L) / grid.dx
    vals = np.array([ndimage.map_coordinates(f, coords, order=3, mode="grid-wrap") for f in stack])
    return float(np.dot(integrand.combine(vals, pts, state.t), w))


def kg_cone_integrand(ops, params: FunctionalParams) -> ConeIntegrand:
    """tau^-delta (|G v|^2 + m^2 v^2) on the cone."""
    n = ops.grid.n

    def fields(st):
        return [st.v, st.vt] + list(ops.grad(st.v))

    def combine(vals, pts, tau):
        eta = pts / np.sqrt(np.sum(pts**2, axis=0))
        v, vt, g = vals[0], vals[1], vals[2:2 + n]
        G2 = sum((g[a] + eta[a] * vt) ** 2 for a in range(n))
        return tau ** (-params.delta) * (G2 + params.m**2 * v**2)

    return ConeIntegrand(fields, combine)


def dirac_cone_integrand(rep) -> ConeIntegrand:
    """|[psi]_-|^2 on the cone."""
    N0 = rep.N0

    def fields(st):
        return list(st.psi.real) + list(st.psi.imag)

    def combine(vals, pts, tau):
        psi = vals[:N0] + 1j * vals[N0:]
        eta = pts / np.sqrt(np.sum(pts**2, axis=0))
        return spinor_norm2(psi - apply_matrix(direction_operator(rep, eta), psi))

    return ConeIntegrand(fields, combine)


class _Accum:
    """Trapezoid integral of a rate sampled at increasing times."""

    def __init__(self):
        self.total, self.t, self.rate = 0.0, None, None
        self.series = []

    def add(self, t, rate):
        if self.t is not None:
            self.total += 0.5 * (self.rate + rate) * (t - self.t)
        self.t, self.rate = t, rate
        self.series.append((t, self.total))


def _cone_pointwise(acc: ConeAccumulator, state, integrand: ConeIntegrand):
    grid = state.grid
    if state.t - 1 < 2 * grid.dx:
        return cone_accumulate(acc, state, np.zeros(grid.shape))
    rate = SQRT2 * cone_value(grid, integrand, state)
    if acc.last_tau is not None:
        acc.raw += 0.5 * (acc.last_rate + rate) * (state.t - acc.last_tau)
    acc.last_tau, acc.last_rate = state.t, rate
    acc.taus.append(state.t)
    acc.values.append(acc.raw)
    return acc


# --------------------------------------------------------------------------
# monitors


class _Strided(Monitor):
    def __init__(self, stride=1):
        if stride < 1:
            raise ValueError("stride must be >= 1")
        self.stride = stride

    def start(self, state, ctx):
        self.ops = ctx.ops
        self.rep = ctx.rep
        self.sample(state, ctx)

    def step(self, state, ctx):
        if ctx.step_index % self.stride == 0:
            self.sample(state, ctx)

    def finish(self, ctx):
        last = ctx.buffer[-1]
        if ctx.step_index % self.stride:
            self.sample(last, ctx)


class GhostYNorms(_Strided):
    """Exterior Y-norms of v and psi and the cone terms R_1, R_D.

    Y_v   = E^{ex}_{1,delta}(t, v)^1/2 + (int int tau^-delta w'(r-tau)(|Gv|^2 + v^2))^1/2
    Y_psi = E^{ex}_D(t, psi)^1/2       + (int int w'(r-tau) |[psi]_-|^2)^1/2
    R_1^2 and R_D^2 integrate against the cone surface measure.
    """

    def __init__(self, params: FunctionalParams | None = None, stride: int = 1):
        if stride > 4:
            raise ValueError("ghost accumulators need a sampling stride of at most 4 steps")
        super().__init__(stride)
        self.params = params or FunctionalParams()
        self.ghost_v, self.ghost_psi = _Accum(), _Accum()
        self.R1, self.RD = ConeAccumulator("R_1"), ConeAccumulator("R_D")
        self.E_v = self.E_psi = 0.0
        self.t = None

    def start(self, state, ctx):
        self.kg_cone = kg_cone_integrand(ctx.ops, self.params)
        self.dirac_cone = dirac_cone_integrand(ctx.rep)
        super().start(state, ctx)

    def rates(self, state):
        p, grid, t = self.params, state.grid, state.t
        w = exterior_weight(grid, t)
        wp = w * omega_prime(grid.r - t, p.lam)
        gv = grid.integrate(wp * t ** (-p.delta) * good_density(state.v, state.vt, self.ops, p.m))
        gp = grid.integrate(wp * spinor_norm2(radial_minus(self.rep, state.psi, grid)))
        return gv, gp

    def sample(self, state, ctx):
        gv, gp = self.rates(state)
        self.ghost_v.add(state.t, gv)
        self.ghost_psi.add(state.t, gp)
        self.E_v = exterior_flat_energy(state, self.params, ops=self.ops)
        self.E_psi = dirac_exterior_energy(state, self.params)
        _cone_pointwise(self.R1, state, self.kg_cone)
        _cone_pointwise(self.RD, state, self.dirac_cone)
        self.t = state.t

    def row(self) -> dict:
        return {
            "E_ex_1": self.E_v,
            "E_ex_D": self.E_psi,
            "Y_ex_1": math.sqrt(self.E_v) + math.sqrt(max(self.ghost_v.total, 0.0)),
            "Y_ex_D": math.sqrt(self.E_psi) + math.sqrt(max(self.ghost_psi.total, 0.0)),
            "R_1": math.sqrt(max(self.R1.raw, 0.0)),
            "R_D": math.sqrt(max(self.RD.raw, 0.0)),
        }


def ghost_Y_norms(history, params: FunctionalParams | None = None, t: float | None = None, ops=None) -> dict:
    """Y-norm report from a stored history (up to time t)."""
    mon = GhostYNorms(params, stride=1)
    _replay(mon, history, t, ops)
    return mon.row()


class _ReplayCtx:
    def __init__(self, grid, ops, rep, buffer):
        self.ops, self.rep, self.grid, self.buffer = ops, rep, grid, buffer
        self.step_index = 0


def _replay(mon, history, t=None, ops=None):
    grid = history[0].grid
    ops = ops or SpatialOps(grid)
    states = [st for st in history.states if t is None or st.t <= t + 1e-9]
    ctx = _ReplayCtx(grid, ops, states[0].rep, states)
    mon.start(states[0], ctx)
    for st in states[1:]:
        ctx.step_index += 1
        mon.step(st, ctx)
    ctx.buffer = states
    mon.finish(ctx)
    return mon


def bootstrap_terms(state, ops, params: FunctionalParams, N_ord: int = 2) -> dict:
    """The exterior integrals of the bootstrap density l(tau), without the
    (C_1 eps)^-2 prefactor:

        psi   = sum_{|I|<=N}   int (2+r-tau)^lam |[hatGamma^I psi]_-|^2
        v_top = sum_{|I|<=N}   int (2+r-tau)^lam tau^-delta |Gamma^I v|^2
        v_low = sum_{|I|<=N-1} int (2+r-tau)^lam |Gamma^I v|^2
    """
    grid, t, rep = state.grid, state.t, state.rep
    weight = exterior_weight(grid, t) * np.maximum(2 + grid.r - t, 0.0) ** params.lam
    out = {"psi": 0.0, "v_top": 0.0, "v_low": 0.0}
    if N_ord == 0:
        P, V = [state.psi], [state.v]
    else:
        P, V = onshell_jets(state, ops, N_ord)
    names = field_names(grid.n)
    gp = gamma_powers(P, t, ops, N_ord, names, rep, hat=True)
    gv = gamma_powers(V, t, ops, N_ord, names)
    for I, jet in gp.items():
        out["psi"] += grid.integrate(weight * spinor_norm2(radial_minus(rep, jet[0], grid)))
    for I, jet in gv.items():
        val = grid.integrate(weight * jet[0] ** 2)
        out["v_top"] += t ** (-params.delta) * val
        if sum(I) <= N_ord - 1:
            out["v_low"] += val
    out["total"] = out["psi"] + out["v_top"] + out["v_low"]
    return out


class BootstrapDensity(_Strided):
    """Samples l(tau) every ``stride`` steps and integrates it in time."""

    def __init__(self, params: FunctionalParams | None = None, N_ord: int = 2, stride: int = 1):
        super().__init__(stride)
        self.params = params or FunctionalParams()
        self.N_ord = N_ord
        self.times, self.values = [], []
        self.integral = _Accum()

    def sample(self, state, ctx):
        if self.times and state.t <= self.times[-1] + 1e-12:
            return
        terms = bootstrap_terms(state, self.ops, self.params, self.N_ord)
        self.times.append(state.t)
        self.values.append(terms)
        self.integral.add(state.t, terms["total"])

    def running_integral(self):
        t = np.array(self.times)
        return t, np.array([v for _, v in self.integral.series])

    def plateau(self) -> float:
        """Increase of the running integral over the last quarter of the
        sampled window, as a fraction of its final value."""
        t, I = self.running_integral()
        if I.size < 2 or I[-1] == 0:
            return 0.0
        tq = t[0] + 0.75 * (t[-1] - t[0])
        return float((I[-1] - np.interp(tq, t, I)) / I[-1])

    def row(self) -> dict:
        if not self.values:
            return {"l_tau": 0.0, "int_l": 0.0}
        return {"l_tau": self.values[-1]["total"], "int_l": self.integral.total}


def bootstrap_density(history, tau: float, params: FunctionalParams | None = None, N_ord: int = 2,
                      ops=None) -> dict:
    """l(tau) terms at a stored time together with the running integral of
    l over the stored history up to tau."""
    params = params or FunctionalParams()
    grid = history[0].grid
    ops = ops or SpatialOps(grid)
    mon = BootstrapDensity(params, N_ord)
    _replay(mon, history, tau, ops)
    out = dict(mon.values[-1])
    out["integral"] = mon.integral.total
    return out


class EnergyIdentity(Monitor):
    """Term-by-term bookkeeping of the integrated exterior energy identities.

    KG (u = v, F = -Box v + v):
        E(t) - E(2) + (1+lam) int int tau^-delta (2+r-tau)^lam (|Gu|^2 + m^2 u^2)
        + cone int tau^-delta (|Gu|^2 + m^2 u^2) dS dtau
        + delta int int tau^-delta-1 w (|du|^2 + m^2 u^2)  =  2 int int tau^-delta w u_t F
    Dirac (F = i g d psi + M psi):
        E_D(t) - E_D(2) + (1+lam)/2 int int (2+r-tau)^lam |[psi]_-|^2
        + 1/2 cone int |[psi]_-|^2 dS dtau  =  2 int int w Im(psi* g0 F)

    ``omega='one'`` replaces the ghost weight by 1; ``region='full'``
    integrates over the whole box (no cone term), giving plain conservation.
    """

    def __init__(self, which: str = "KG", params: FunctionalParams | None = None, omega_kind: str = "ghost",
                 region: str = "exterior"):
        if which not in ("KG", "Dirac"):
            raise ValueError("which must be 'KG' or 'Dirac'")
        if omega_kind not in ("ghost", "one") or region not in ("exterior", "full"):
            raise ValueError("omega_kind in {'ghost','one'} and region in {'exterior','full'}")
        self.which, self.omega_kind, self.region = which, omega_kind, region
        self.params = params or FunctionalParams()
        self.times, self.energy = [], []
        self.ghost, self.dterm, self.source = _Accum(), _Accum(), _Accum()
        self.cone = ConeAccumulator(f"cone_{which}")

    def start(self, state, ctx):
        self.ops, self.rep = ctx.ops, ctx.rep
        self.forcing = getattr(getattr(ctx, "system", None), "forcing", None)
        self.coupling = getattr(getattr(ctx, "system", None), "coupling", True)
        if self.which == "KG":
            self.cone_f = kg_cone_integrand(ctx.ops, self.params)
        else:
            self.cone_f = dirac_cone_integrand(ctx.rep)
        self.step(state, ctx)

    def _weights(self, grid, t):
        r = grid.r
        w = exterior_weight(grid, t) if self.region == "exterior" else np.ones(grid.shape)
        if self.omega_kind == "ghost":
            return w, w * omega(r - t, self.params.lam), w * omega_prime(r - t, self.params.lam)
        return w, w, np.zeros(grid.shape)

    def step(self, state, ctx):
        p, grid, t, ops = self.params, state.grid, state.t, self.ops
        w, wo, wp = self._weights(grid, t)
        if self.which == "KG":
            u, ut = state.v, state.vt
            e = kg_density(u, ut, ops.grad(u), p.m)
            F = gamma0_density(self.rep, state.psi) if self.coupling else np.zeros(grid.shape)
            if self.forcing is not None:
                F = F + self.forcing(t)[1]
            td = t ** (-p.delta)
            self.energy.append(grid.integrate(td * wo * e))
            self.ghost.add(t, grid.integrate(td * wp * good_density(u, ut, ops, p.m)))
            self.dterm.add(t, p.delta * grid.integrate(t ** (-p.delta - 1) * wo * e))
            self.source.add(t, 2 * grid.integrate(td * wo * ut * F))
        else:
            psi = state.psi
            F = state.v * psi if self.coupling else np.zeros_like(psi)
            if self.forcing is not None:
                F = F + self.forcing(t)[0]
            self.energy.append(grid.integrate(wo * spinor_norm2(psi)))
            self.ghost.add(t, 0.5 * grid.integrate(wp * spinor_norm2(radial_minus(self.rep, psi, grid))))
            self.dterm.add(t, 0.0)
            im = dagger_dot(psi, self.rep.gamma[0], F).imag
            self.source.add(t, 2 * grid.integrate(wo * im))
        if self.region == "exterior":
            _cone_pointwise(self.cone, state, self.cone_f)
        self.times.append(t)

    def _at(self, acc_series, t):
        ts = np.array([a for a, _ in acc_series])
        vs = np.array([b for _, b in acc_series])
        return float(np.interp(t, ts, vs))

    def terms(self, window=None) -> dict:
        ts = np.array(self.times)
        t0, t1 = (ts[0], ts[-1]) if window is None else window
        i0 = int(np.argmin(np.abs(ts - t0)))
        i1 = int(np.argmin(np.abs(ts - t1)))
        out = {
            "E_end": self.energy[i1],
            "E_start": self.energy[i0],
            "ghost": self.ghost.series[i1][1] - self.ghost.series[i0][1],
            "delta": self.dterm.series[i1][1] - self.dterm.series[i0][1],
            "source": self.source.series[i1][1] - self.source.series[i0][1],
            "cone": 0.0,
        }
        if self.region == "exterior" and self.cone.taus:
            taus = np.array(self.cone.taus)
            vals = np.array(self.cone.values) / SQRT2
            c = float(np.interp(ts[i1], taus, vals) - np.interp(ts[i0], taus, vals))
            out["cone"] = 0.5 * c if self.which == "Dirac" else c
        return out

    def residual(self, window=None) -> float:
        """|lhs - rhs| / (largest term)."""
        T = self.terms(window)
        lhs = T["E_end"] - T["E_start"] + T["ghost"] + T["delta"] + T["cone"]
        big = max(abs(v) for v in T.values())
        if big == 0:
            return 0.0
        return abs(lhs - T["source"]) / big

    def source_fraction(self, window=None) -> float:
        """Dirac source relative to the largest term (identically 0 for F = v psi)."""
        T = self.terms(window)
        big = max(abs(v) for k, v in T.items() if k != "source")
        return abs(T["source"]) / big if big else 0.0


def energy_identity_residual(history, window=None, which: str = "KG", params: FunctionalParams | None = None,
                             ops=None, omega_kind="ghost", region="exterior", forcing=None,
                             coupling: bool = True) -> float:
    """Residual of the integrated identity over ``window`` from a full-rate history;
    ``coupling`` must match the run that produced it."""
    mon = EnergyIdentity(which, params, omega_kind, region)
    grid = history[0].grid
    ops = ops or SpatialOps(grid)
    states = list(history.states)
    if window is not None:
        states = [s for s in states if window[0] - 1e-9 <= s.t <= window[1] + 1e-9]
    if len(states) < 2:
        raise ValueError("need at least two stored states in the window")
    ctx = _ReplayCtx(grid, ops, states[0].rep, states)
    ctx.system = type("S", (), {"forcing": forcing, "coupling": coupling})()
    mon.start(states[0], ctx)
    for st in states[1:]:
        mon.step(st, ctx)
    return mon.residual()


# --------------------------------------------------------------------------
# pointwise observables and decay fits


def japanese(a):
    return np.sqrt(1 + np.asarray(a, dtype=float) ** 2)


def observables(state, ops=None) -> dict:
    """Sup-norm observables at one time, over the admitted nodes."""
    grid, t, M = state.grid, state.t, state.M
    m = grid.sup_mask
    r = grid.r
    a_psi = np.sqrt(spinor_norm2(state.psi))
    interior = m & (r < t - 1)
    exterior = m & (r >= t - 1)
    sup = lambda f, mask: float(np.max(f[mask])) if np.any(mask) else 0.0  # noqa: E731
    out = {
        "t": t,
        "sup_psi": sup(a_psi, m),
        "sup_v": sup(np.abs(state.v), m),
        "charge": grid.integrate(spinor_norm2(state.psi)),
    }
    if grid.n == 2:
        out["profile"] = sup(np.sqrt(japanese(t + r) * japanese(t - r)) * a_psi, interior)
    else:
        w = japanese(t + r) * np.sqrt(japanese(t - r)) + M**2 * japanese(t + r) ** 1.5
        out["profile"] = sup(w * a_psi, m)
        out["mass_in"] = M * t**1.5 * sup(a_psi, interior)
        out["mass_ex"] = M**2 * sup(r**1.5 * a_psi, exterior)
    return out


class Observables(_Strided):
    def __init__(self, stride: int = 1):
        super().__init__(stride)
        self.series = {}

    def sample(self, state, ctx):
        if self.series.get("t") and state.t <= self.series["t"][-1] + 1e-12:
            return
        for k, v in observables(state, self.ops).items():
            self.series.setdefault(k, []).append(v)

    def get(self, name):
        return np.array(self.series["t"]), np.array(self.series[name])

    def row(self) -> dict:
        return {k: v[-1] for k, v in self.series.items() if k != "t"}


@dataclass
class DecayFit:
    exponent: float
    stderr: float
    samples: int
    window: tuple


def decay_fit(t, y=None, window=(10.0, np.inf), name=None) -> DecayFit:
    """Least-squares slope of log y against log t over the window.

    Accepts arrays (t, y) or an Observables monitor plus ``name``.
    """
    if isinstance(t, Observables):
        t, y = t.get(name)
    t, y = np.asarray(t, dtype=float), np.asarray(y, dtype=float)
    sel = (t >= window[0] - 1e-9) & (t <= window[1] + 1e-9)
    if np.count_nonzero(sel) < 10:
        raise ValueError(f"decay fit needs >= 10 samples in the window, got {np.count_nonzero(sel)}")
    lt, ly = np.log(t[sel]), np.log(y[sel])
    if np.ptp(ly) == 0:
        return DecayFit(0.0, 0.0, int(sel.sum()), tuple(window))
    res = stats.linregress(lt, ly)
    return DecayFit(float(res.slope), float(res.stderr), int(sel.sum()), tuple(window))


def last_quarter_growth(t, y, window=None) -> float:
    """max of y over the last quarter of the window divided by its max over
    the first three quarters, minus one."""
    t, y = np.asarray(t, dtype=float), np.asarray(y, dtype=float)
    if window is not None:
        sel = (t >= window[0] - 1e-9) & (t <= window[1] + 1e-9)
        t, y = t[sel], y[sel]
    tq = t[0] + 0.75 * (t[-1] - t[0])
    head, tail = y[t < tq], y[t >= tq]
    if head.size == 0 or tail.size == 0 or np.max(head) == 0:
        return 0.0
    return float(np.max(tail) / np.max(head) - 1)


@dataclass
class MassReport:
    M: float
    times: np.ndarray
    interior: np.ndarray
    exterior: np.ndarray

    @property
    def constant(self) -> float:
        return float(max(np.max(self.interior, initial=0.0), np.max(self.exterior, initial=0.0)))

    def growth(self, window=None) -> float:
        if self.M == 0:
            return 0.0
        return max(last_quarter_growth(self.times, self.interior, window),
                   last_quarter_growth(self.times, self.exterior, window))


def mass_weighted_bounds(source, M: float | None = None) -> MassReport:
    """Series of M t^3/2 sup_int |psi| and M^2 sup_ext r^3/2 |psi| (n = 3).

    ``source`` is an Observables monitor or a History.
    """
    if isinstance(source, Observables):
        if "mass_in" not in source.series:
            raise ValueError("mass-weighted bounds are defined for n = 3 only")
        t = np.array(source.series["t"])
        return MassReport(M if M is not None else float("nan"), t,
                          np.array(source.series["mass_in"]), np.array(source.series["mass_ex"]))
    states = list(source.states)
    if states[0].grid.n != 3:
        raise ValueError("mass-weighted bounds are defined for n = 3 only")
    obs = [observables(s) for s in states]
    return MassReport(states[0].M, np.array([o["t"] for o in obs]),
                      np.array([o["mass_in"] for o in obs]), np.array([o["mass_ex"] for o in obs]))


# --------------------------------------------------------------------------
# CSV report

REPORT_COLUMNS = [
    "t", "sup_psi", "sup_v", "profile", "charge", "mass_in", "mass_ex",
    "E_ex_1", "E_ex_D", "Y_ex_1", "Y_ex_D", "R_1", "R_D", "l_tau", "int_l",
    "res_psi", "res_v", "res_psi_tilde", "res_v_tilde", "res_Psi_tilde", "res_Psi_id",
]


class Report(Monitor):
    """Collects one CSV row every ``every`` steps from row-providing monitors."""

    def __init__(self, providers, every: int = 1):
        self.providers = list(providers)
        self.every = every
        self.rows = []

    def start(self, state, ctx):
        self._emit(state)

    def step(self, state, ctx):
        if ctx.step_index % self.every == 0:
            self._emit(state)

    def finish(self, ctx):
        last = ctx.buffer[-1]
        if not self.rows or self.rows[-1]["t"] < last.t - 1e-12:
            self._emit(last)

    def _emit(self, state):
        row = {"t": state.t}
        for p in self.providers:
            row.update(p.row())
        self.rows.append(row)

    def write(self, path):
        write_report_csv(path, self.rows)


def write_report_csv(path, rows) -> None:
    cols = [c for c in REPORT_COLUMNS if any(c in r for r in rows)]
    extra = sorted({k for r in rows for k in r} - set(cols))
    if extra:
        raise ValueError(f"undocumented report columns: {extra}")
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(cols)
        for r in rows:
            w.writerow([repr(float(r[c])) if c in r else "" for c in cols])
