"""RK4 evolution of the coupled Dirac--Klein-Gordon system

    i g^mu d_mu psi + M psi = v psi,      -Box v + v = psi* g0 psi,

written as a first-order system in (psi, v, d_t v), optionally together with
the wave potential Box Psi = v psi.
"""
from __future__ import annotations

import logging
import math
import time
from collections import deque
from dataclasses import asdict, dataclass, field
from functools import lru_cache

import numpy as np

from .clifford import apply_matrix, build_gamma, dagger_dot
from .fields import GridSpec, SimState, SpatialOps, dirac_operator_spatial, gamma0_density

log = logging.getLogger(__name__)

T0 = 2.0

# 2D needs the smaller step: RK4 damping at 0.25 dx breaks the 1e-6 drift budget
DT_FACTOR = {2: 0.1, 3: 0.25}
DEFAULTS = {
    2: dict(M=0.0, points=256, L=48.0, t_end=40.0, eps0=0.01, width=1.5),
    3: dict(M=0.0, points=96, L=20.0, t_end=14.0, eps0=0.02, width=1.0),
}


@lru_cache(maxsize=16)
def _grid(n, points, L):
    return GridSpec(n, points, L)


class InstabilityError(RuntimeError):
    """Non-finite values appeared during the evolution."""

    def __init__(self, t, max_psi, max_v):
        super().__init__(f"instability at t={t:.6g}: max|psi|={max_psi:.3e}, max|v|={max_v:.3e}")
        self.t, self.max_psi, self.max_v = t, max_psi, max_v


class ConfigError(ValueError):
    """Invalid run configuration."""


def _steps(span, dt):
    """Steps needed to reach the end time; the last one may overshoot by
    less than dt, which the 2dx wrap margin absorbs."""
    return max(0, math.ceil(span / dt - 1e-9))


@dataclass
class RunConfig:
    n: int = 2
    M: float = 0.0
    points: int = 256
    L: float = 48.0
    dt: float | None = None
    dt_factor: float | None = None
    t_end: float = 40.0
    eps0: float = 0.01
    width: float = 1.5
    R0: float | None = None
    u0: list | None = None
    coupling: bool = True
    potential: bool = False
    derivative: str = "spectral"
    lam: float = 1.0
    delta: float = 0.05
    N_ord: int = 2
    threads: int | None = None
    seed: int = 0
    monitors: dict = field(default_factory=dict)
    output: str | None = None

    def __post_init__(self):
        if self.R0 is None:
            self.R0 = 6.0 * self.width
        if self.n not in (2, 3):
            raise ConfigError("n must be 2 or 3")
        if not 0.0 <= self.M <= 1.0:
            raise ConfigError("mass M must lie in [0, 1]")
        try:
            self.grid
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        if self.dt_factor is None:
            self.dt_factor = DT_FACTOR[self.n]
        if self.dt is None:
            self.dt = self.dt_factor * self.grid.dx
        if self.dt <= 0 or self.dt > 0.5 * self.grid.dx:
            raise ConfigError(f"CFL violated: dt={self.dt:.4g} > 0.5 dx={0.5 * self.grid.dx:.4g}")
        if self.t_end <= T0:
            raise ConfigError("t_end must exceed the initial time 2")
        if self.R0 + (self.t_end - T0) + 2 * self.grid.dx > self.L:
            raise ConfigError(
                f"signal would wrap: R0 + (t_end - 2) + 2dx = "
                f"{self.R0 + self.t_end - T0 + 2 * self.grid.dx:.3f} > L = {self.L}"
            )
        if self.potential and (self.n != 2 or self.M != 0):
            raise ConfigError("the wave potential is defined for n=2, M=0 only")

    @classmethod
    def defaults(cls, n: int, **overrides) -> "RunConfig":
        """Desk-scale default configuration for dimension n."""
        base = dict(DEFAULTS[n])
        base.update(overrides)
        return cls(n=n, **base)

    @property
    def grid(self) -> GridSpec:
        return _grid(self.n, self.points, self.L)

    @property
    def nsteps(self) -> int:
        return _steps(self.t_end - T0, self.dt)

    def to_dict(self) -> dict:
        return asdict(self)


def default_u0(N0: int) -> np.ndarray:
    """Fixed unit spinor with psi* g0 psi != 0, so the coupling is active."""
    u = np.array([1, 0.5j, 0.25, 0.125j][:N0], dtype=complex)
    return u / np.linalg.norm(u)


def initial_state(cfg: RunConfig) -> SimState:
    grid = cfg.grid
    rep = build_gamma(cfg.n)
    u0 = np.asarray(cfg.u0, dtype=complex) if cfg.u0 is not None else default_u0(rep.N0)
    u0 = u0 / np.linalg.norm(u0)
    prof = cfg.eps0 * np.exp(-grid.r**2 / cfg.width**2)
    psi = u0.reshape((-1,) + (1,) * cfg.n) * prof
    state = SimState(t=T0, psi=psi, v=prof.copy(), vt=np.zeros(grid.shape), M=cfg.M, grid=grid)
    if cfg.potential:
        state.Psi = np.zeros_like(psi)
        state.Psit = -1j * apply_matrix(rep.gamma[0], psi)
    return state


class System:
    """Right-hand side of the first-order system.

    ``forcing(t)`` may return (f_psi, f_v) added as
    i g d psi + M psi - v psi = f_psi and -Box v + v - psi* g0 psi = f_v.
    """

    def __init__(self, grid: GridSpec, M: float, ops: SpatialOps | None = None, coupling=True, forcing=None):
        self.grid = grid
        self.M = M
        self.ops = ops or SpatialOps(grid)
        self.rep = build_gamma(grid.n)
        self.coupling = coupling
        self.forcing = forcing

    def __call__(self, t, y):
        rep, ops = self.rep, self.ops
        g0 = rep.gamma[0]
        psi, v, vt = y[0], y[1], y[2]
        dpsi = dirac_operator_spatial(rep, ops, psi, self.M)
        dvt = ops.lap(v)
        dvt -= v
        if self.coupling:
            vpsi = v * psi
            dpsi -= 1j * apply_matrix(g0, vpsi)
            # g0 is real diagonal, so the density is real by construction
            dvt += gamma0_density(rep, psi)
        if self.forcing is not None:
            fpsi, fv_ext = self.forcing(t)
            dpsi = dpsi - 1j * apply_matrix(g0, fpsi)
            dvt = dvt + fv_ext
        out = [dpsi, vt, dvt]
        if len(y) > 3:
            Psi, Psit = y[3], y[4]
            src = v * psi if self.coupling else 0.0
            out += [Psit, ops.lap(Psi) - src]
        return out


def rk4_step(f, t, y, dt):
    k1 = f(t, y)
    k2 = f(t + dt / 2, [a + dt / 2 * b for a, b in zip(y, k1)])
    k3 = f(t + dt / 2, [a + dt / 2 * b for a, b in zip(y, k2)])
    k4 = f(t + dt, [a + dt * b for a, b in zip(y, k3)])
    return [a + dt / 6 * (b1 + 2 * b2 + 2 * b3 + b4) for a, b1, b2, b3, b4 in zip(y, k1, k2, k3, k4)]


def step(state: SimState, dt: float, system: System | None = None) -> SimState:
    """One classical RK4 step; raises InstabilityError on non-finite output."""
    if dt > 0.5 * state.grid.dx:
        raise ConfigError("CFL violated")
    system = system or System(state.grid, state.M)
    try:
        y = rk4_step(system, state.t, list(state.arrays()), dt)
    except FloatingPointError:
        y = None
    new = None if y is None else state.with_arrays(state.t + dt, y)
    if new is None or not new.is_finite():
        raise InstabilityError(
            state.t + dt, float(np.nanmax(np.abs(state.psi))), float(np.nanmax(np.abs(state.v)))
        )
    check_density_real(system.rep, new.psi)
    return new


def check_density_real(rep, psi, tol=1e-13):
    """Assert that psi* g0 psi is real to tol relative to max |psi|^2."""
    d = dagger_dot(psi, rep.gamma[0], psi)
    scale = float(np.max(np.abs(psi) ** 2)) if psi.size else 0.0
    if scale and float(np.max(np.abs(d.imag))) > tol * scale:
        raise FloatingPointError("psi* g0 psi acquired an imaginary part")


class History:
    """Time-ordered snapshots at a uniform stride.

    ``maxlen`` turns the store into a ring buffer of the most recent states.
    """

    def __init__(self, dt: float, stride: int = 1, maxlen: int | None = None):
        self.dt = dt
        self.stride = stride
        self.states = deque(maxlen=maxlen)
        self._count = 0

    @property
    def spacing(self) -> float:
        return self.dt * self.stride

    def offer(self, state: SimState) -> None:
        if self._count % self.stride == 0:
            if self.states and state.t <= self.states[-1].t:
                raise ValueError("history times must increase")
            self.states.append(state)
        self._count += 1

    def times(self) -> np.ndarray:
        return np.array([s.t for s in self.states])

    def __len__(self):
        return len(self.states)

    def __getitem__(self, i):
        return self.states[i]

    def index_of(self, t: float) -> int:
        ts = self.times()
        i = int(np.argmin(np.abs(ts - t)))
        if abs(ts[i] - t) > 1e-6 * max(1.0, abs(t)) + 1e-9:
            raise KeyError(f"t={t} not stored (nearest {ts[i]:.6g})")
        return i

    def stencil(self, t: float, width: int = 2) -> list:
        i = self.index_of(t)
        if i - width < 0 or i + width >= len(self.states):
            raise ValueError(f"insufficient history for a {2 * width + 1}-point stencil at t={t}")
        return [self.states[j] for j in range(i - width, i + width + 1)]

    def coverage(self) -> tuple:
        if not self.states:
            return (np.nan, np.nan)
        return (self.states[0].t, self.states[-1].t)


D1 = np.array([1.0, -8.0, 0.0, 8.0, -1.0]) / 12.0
D2 = np.array([-1.0, 16.0, -30.0, 16.0, -1.0]) / 12.0


def stencil_d1(values, h):
    return sum(c * v for c, v in zip(D1, values) if c) / h


def stencil_d2(values, h):
    return sum(c * v for c, v in zip(D2, values)) / h**2


def pde_residual(history: History, t: float, ops: SpatialOps | None = None, forcing=None, fields=False):
    """L2 norms of i g d psi + M psi - v psi and -Box v + v - psi* g0 psi at t,
    with time derivatives from 5-point stencils on the stored history."""
    sts = history.stencil(t)
    c = sts[2]
    grid = c.grid
    ops = ops or SpatialOps(grid)
    rep = build_gamma(grid.n)
    h = history.spacing
    g0 = rep.gamma[0]
    psit = stencil_d1([s.psi for s in sts], h)
    res_psi = 1j * apply_matrix(g0, psit) + c.M * c.psi - c.v * c.psi
    for a, da in enumerate(ops.grad(c.psi)):
        res_psi = res_psi + 1j * apply_matrix(rep.gamma[a + 1], da)
    vtt = stencil_d2([s.v for s in sts], h)
    res_v = vtt - ops.lap(c.v) + c.v - dagger_dot(c.psi, g0, c.psi).real
    if forcing is not None:
        fpsi, fv = forcing(c.t)
        res_psi = res_psi - fpsi
        res_v = res_v - fv
    norms = (
        np.sqrt(grid.integrate(np.sum(np.abs(res_psi) ** 2, axis=0))),
        np.sqrt(grid.integrate(res_v**2)),
    )
    if fields:
        return norms, (res_psi, res_v)
    return norms


@dataclass
class RunContext:
    config: RunConfig
    ops: SpatialOps
    system: System
    buffer: History
    step_index: int = 0

    @property
    def rep(self):
        return self.system.rep

    @property
    def grid(self):
        return self.system.grid


class Monitor:
    """Hook object called at the start, after every step and at the end."""

    def start(self, state: SimState, ctx: RunContext) -> None:
        self.step(state, ctx)

    def step(self, state: SimState, ctx: RunContext) -> None:
        pass

    def finish(self, ctx: RunContext) -> None:
        pass


def evolve(cfg_or_state, monitors=(), forcing=None, cfg: RunConfig | None = None, buffer_len: int = 8,
           progress: bool = False):
    """Run from the initial state (or a given state) to cfg.t_end.

    Returns (final_state, context).  Monitors see every step; ``ctx.buffer``
    holds the most recent ``buffer_len`` full-rate states for time stencils.
    """
    if isinstance(cfg_or_state, RunConfig):
        cfg = cfg_or_state
        state = initial_state(cfg)
    else:
        state = cfg_or_state
        if cfg is None:
            raise ConfigError("a RunConfig is required when starting from a state")
    ops = SpatialOps(state.grid, cfg.derivative, workers=cfg.threads)
    system = System(state.grid, state.M, ops, coupling=cfg.coupling, forcing=forcing)
    ctx = RunContext(cfg, ops, system, History(cfg.dt, 1, maxlen=buffer_len))
    nsteps = _steps(cfg.t_end - state.t, cfg.dt)
    ctx.buffer.offer(state)
    for m in monitors:
        m.start(state, ctx)
    wall = time.time()
    for i in range(nsteps):
        state = step(state, cfg.dt, system)
        ctx.step_index += 1
        ctx.buffer.offer(state)
        for m in monitors:
            m.step(state, ctx)
        if progress and (i + 1) % max(1, nsteps // 10) == 0:
            log.info("t=%.3f  (%d/%d steps, %.1fs)", state.t, i + 1, nsteps, time.time() - wall)
    for m in monitors:
        m.finish(ctx)
    return state, ctx


class HistoryRecorder(Monitor):
    """Stores snapshots every ``stride`` steps inside [t_min, t_max]."""

    def __init__(self, dt, stride=1, t_min=-np.inf, t_max=np.inf):
        self.history = History(dt, stride)
        self.t_min, self.t_max = t_min, t_max

    def step(self, state, ctx):
        if self.t_min - 1e-9 <= state.t <= self.t_max + 1e-9:
            self.history.offer(state)
