"""Space-time regions, truncated hyperboloids and the light-cone boundary.

Interior region r < t - 1, exterior region r >= t - 1.  The hyperboloid
H_s = {t = sqrt(s^2 + |x|^2)} meets the cone r = t - 1 at

    t(s) = (s^2 + 1) / 2,   r(s) = (s^2 - 1) / 2.

Field values on a hyperboloid are obtained from stored snapshots by 4-point
Lagrange interpolation in time at every grid node, so the slice quadrature
weight is simply dx^n.
"""
from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from .fields import GridSpec

log = logging.getLogger(__name__)

INTERIOR = "interior"
EXTERIOR = "exterior"
PARTS = ("interior", "exterior", "full")


class CoverageError(ValueError):
    """The stored history does not span the times a computation needs."""

    def __init__(self, need, have):
        self.need, self.have = tuple(need), tuple(have)
        super().__init__(
            f"history covers t in [{have[0]:.6g}, {have[1]:.6g}] but "
            f"[{need[0]:.6g}, {need[1]:.6g}] is required"
        )


def t_of_s(s):
    return (np.asarray(s, dtype=float) ** 2 + 1) / 2


def r_of_s(s):
    return (np.asarray(s, dtype=float) ** 2 - 1) / 2


def exterior_mask(t, r):
    """True where r >= t - 1; the cone itself belongs to the exterior."""
    return np.asarray(r) >= np.asarray(t) - 1


def classify(t, x):
    """Region label(s) of the point(s) x (shape (n,) or (n, ...)) at time t."""
    t = float(t)
    if t < 2:
        raise ValueError("regions are defined for t >= 2")
    x = np.asarray(x, dtype=float)
    r = np.sqrt(np.sum(x**2, axis=0))
    ext = exterior_mask(t, r)
    if np.ndim(ext) == 0:
        return EXTERIOR if ext else INTERIOR
    return np.where(ext, EXTERIOR, INTERIOR)


def lagrange4(tau, nodes):
    """Weights (4, ...) of the cubic through the 4 given nodes at tau."""
    tau = np.asarray(tau, dtype=float)
    w = []
    for i in range(4):
        wi = np.ones_like(tau)
        for j in range(4):
            if j != i:
                wi = wi * (tau - nodes[j]) / (nodes[i] - nodes[j])
        w.append(wi)
    return np.array(w)


# --------------------------------------------------------------------------
# hyperboloid slices


@dataclass
class FoliationSlice:
    s: float
    part: str
    x: np.ndarray                 # (n, K) node coordinates
    t: np.ndarray                 # (K,) t(x) = sqrt(s^2 + |x|^2)
    weights: np.ndarray           # (K,) quadrature weights dx^n
    values: dict = field(default_factory=dict)   # name -> (..., K)
    index: np.ndarray | None = None              # flat grid indices of nodes

    @property
    def r(self) -> np.ndarray:
        return np.sqrt(np.sum(self.x**2, axis=0))

    def __len__(self):
        return self.t.size

    def integrate(self, f) -> float:
        return float(np.sum(np.asarray(f) * self.weights))

    def restrict(self, part: str) -> "FoliationSlice":
        keep = _part_mask(self.r, self.s, part)
        return FoliationSlice(
            self.s, part, self.x[:, keep], self.t[keep], self.weights[keep],
            {k: v[..., keep] for k, v in self.values.items()},
            None if self.index is None else self.index[keep],
        )

    def to_csv(self, path) -> None:
        n = self.x.shape[0]
        cols, data = [f"x{a + 1}" for a in range(n)] + ["t"], list(self.x) + [self.t]
        for name, val in self.values.items():
            flat = val.reshape(-1, val.shape[-1]) if val.ndim > 1 else val[None]
            for c, comp in enumerate(flat):
                tag = name if flat.shape[0] == 1 else f"{name}_{c}"
                if np.iscomplexobj(comp):
                    cols += [f"{tag}_re", f"{tag}_im"]
                    data += [comp.real, comp.imag]
                else:
                    cols.append(tag)
                    data.append(comp)
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(cols)
            w.writerows(np.array(data).T.tolist())


def _part_mask(r, s, part):
    if part not in PARTS:
        raise ValueError(f"part must be one of {PARTS}")
    rs = float(r_of_s(s))
    if part == "interior":
        return r < rs
    if part == "exterior":
        return r >= rs
    return np.ones(r.shape, dtype=bool)


def slice_nodes(grid: GridSpec, s: float, part: str = "full", rmax: float | None = None):
    """Flat node indices, coordinates and times of a (truncated) hyperboloid."""
    if s < 1:
        raise ValueError("hyperbolic time s must be >= 1")
    r = grid.r.ravel()
    keep = _part_mask(r, s, part)
    if rmax is None:
        rmax = float(r_of_s(s)) if part == "interior" else grid.L - 4 * grid.dx
    keep &= r <= rmax
    idx = np.flatnonzero(keep)
    x = grid.x.reshape(grid.n, -1)[:, idx]
    return idx, x, np.sqrt(s**2 + r[idx] ** 2)


def _field_getter(spec):
    if callable(spec):
        return spec
    return lambda st: getattr(st, spec)


def _flatten(val, grid):
    val = np.asarray(val)
    return val.reshape(val.shape[: val.ndim - grid.n] + (-1,))


def hyperboloid_slice(history, s: float, part: str = "full", fields=("psi", "v", "vt"),
                      rmax: float | None = None) -> FoliationSlice:
    """Build a slice of H_s from stored snapshots.

    ``fields`` names SimState attributes or maps names to callables of a
    state.  Values at (sqrt(s^2+|x|^2), x) come from the cubic through the
    four snapshots bracketing each node time.
    """
    grid = history[0].grid
    idx, x, tx = slice_nodes(grid, s, part, rmax)
    spec = dict(fields) if isinstance(fields, dict) else {f: f for f in fields}
    sl = FoliationSlice(s, part, x, tx, np.full(tx.size, grid.cell), {}, idx)
    if tx.size == 0:
        sl.values = {k: np.zeros((0,)) for k in spec}
        return sl
    times = history.times()
    if len(times) < 4 or tx.min() < times[0] - 1e-9 or tx.max() > times[-1] + 1e-9:
        raise CoverageError((tx.min(), tx.max()), (times[0], times[-1]) if len(times) else (np.nan, np.nan))
    h = history.spacing
    start = np.clip(np.floor((tx - times[0]) / h).astype(int) - 1, 0, len(times) - 4)
    getters = {k: _field_getter(v) for k, v in spec.items()}
    cache = {}

    def value(j, name):
        key = (j, name)
        if key not in cache:
            cache[key] = _flatten(getters[name](history[j]), grid)
        return cache[key]

    out = {}
    for j0 in np.unique(start):
        sel = np.flatnonzero(start == j0)
        w = lagrange4(tx[sel], times[j0:j0 + 4])
        for name in spec:
            acc = sum(w[i] * value(j0 + i, name)[..., idx[sel]] for i in range(4))
            if name not in out:
                out[name] = np.zeros(acc.shape[:-1] + (tx.size,), dtype=acc.dtype)
            out[name][..., sel] = acc
        for key in [k for k in cache if k[0] < j0]:
            del cache[key]
    sl.values = out
    return sl


class StreamingHyperboloids:
    """Monitor filling hyperboloid slices while the solver runs.

    Each node is filled once the ring buffer holds the four snapshots that
    bracket its time, so no history beyond the last four steps is kept.
    """

    def __init__(self, s_values, fields, part: str = "full", rmax: float | None = None):
        self.s_values = [float(s) for s in s_values]
        self.spec = dict(fields) if isinstance(fields, dict) else {f: f for f in fields}
        self.getters = {k: _field_getter(v) for k, v in self.spec.items()}
        self.part, self.rmax = part, rmax
        self.slices = {}
        self._recent = []

    def start(self, state, ctx):
        grid = state.grid
        self._order = {}
        for s in self.s_values:
            idx, x, tx = slice_nodes(grid, s, self.part, self.rmax)
            o = np.argsort(tx, kind="stable")
            idx, x, tx = idx[o], x[:, o], tx[o]
            self.slices[s] = FoliationSlice(s, self.part, x, tx, np.full(tx.size, grid.cell), {}, idx)
            self._order[s] = 0
        self._t_first = state.t
        self._recent = []
        self.step(state, ctx)

    def _fill(self, upto, final=False):
        times = np.array([t for t, _ in self._recent])
        for s, sl in self.slices.items():
            p = self._order[s]
            if final:
                q = int(np.searchsorted(sl.t, upto + 1e-9, side="right"))
            else:
                q = int(np.searchsorted(sl.t, upto, side="left"))
            if q <= p:
                continue
            sel = slice(p, q)
            w = lagrange4(sl.t[sel], times)
            for name in self.spec:
                acc = sum(w[i] * self._recent[i][1][name][..., sl.index[sel]] for i in range(4))
                if name not in sl.values:
                    sl.values[name] = np.zeros(acc.shape[:-1] + (sl.t.size,), dtype=acc.dtype)
                sl.values[name][..., sel] = acc
            self._order[s] = q

    def step(self, state, ctx):
        vals = {k: _flatten(g(state), state.grid) for k, g in self.getters.items()}
        self._recent.append((state.t, vals))
        if len(self._recent) > 4:
            self._recent.pop(0)
        if len(self._recent) == 4:
            self._fill(self._recent[2][0])

    def finish(self, ctx):
        if len(self._recent) == 4:
            self._fill(self._recent[3][0], final=True)
        self.t_last = self._recent[-1][0] if self._recent else np.nan

    def slice(self, s) -> FoliationSlice:
        """The completed slice for s; raises CoverageError if unfinished."""
        sl = self.slices[float(s)]
        if sl.t.size and (self._order[float(s)] < sl.t.size or sl.t[0] < self._t_first - 1e-9):
            raise CoverageError((sl.t[0], sl.t[-1]), (self._t_first, self.t_last))
        for name in self.spec:
            sl.values.setdefault(name, np.zeros((0,)))
        return sl


# --------------------------------------------------------------------------
# the light-cone boundary


def sphere_nodes(n: int, radius: float, dx: float):
    """Quadrature nodes (n, K) and weights (K,) for the surface integral over
    the circle/sphere of the given radius, resolving it at about dx/4."""
    if n == 2:
        m = max(32, int(math.ceil(8 * math.pi * radius / dx)))
        th = 2 * math.pi * np.arange(m) / m
        pts = radius * np.array([np.cos(th), np.sin(th)])
        return pts, np.full(m, 2 * math.pi * radius / m)
    m = max(16, int(math.ceil(2 * math.pi * radius / dx)))
    mu, wmu = np.polynomial.legendre.leggauss(m)
    nphi = 2 * m
    phi = 2 * math.pi * np.arange(nphi) / nphi
    MU, PH = np.meshgrid(mu, phi, indexing="ij")
    sn = np.sqrt(1 - MU**2)
    pts = radius * np.array([sn * np.cos(PH), sn * np.sin(PH), MU])
    w = radius**2 * np.outer(wmu, np.full(nphi, 2 * math.pi / nphi))
    return pts.reshape(3, -1), w.ravel()


def interpolate_at(grid: GridSpec, f: np.ndarray, pts: np.ndarray, prefiltered=False) -> np.ndarray:
    """Periodic cubic-spline interpolation of a real grid field at points (n, K)."""
    coords = (pts + grid.L) / grid.dx
    return ndimage.map_coordinates(f, coords, order=3, mode="grid-wrap", prefilter=not prefiltered)


def sphere_integral(grid: GridSpec, f: np.ndarray, radius: float) -> float:
    """Surface integral of a real grid field over |x| = radius."""
    pts, w = sphere_nodes(grid.n, radius, grid.dx)
    return float(np.dot(interpolate_at(grid, f, pts), w))


@dataclass
class ConeAccumulator:
    """Running integral over the cone piece {r = tau - 1, 2 <= tau <= t}.

    ``raw`` is the integral against the space-time surface measure,
    sqrt(2) dS dtau; ``normalized`` carries the extra 2^(-1/2) of the unit
    normal, i.e. the plain dS dtau integral that enters the energy balances.
    """

    name: str = "cone"
    raw: float = 0.0
    last_tau: float | None = None
    last_rate: float | None = None
    skipped: int = 0
    taus: list = field(default_factory=list)
    values: list = field(default_factory=list)

    @property
    def normalized(self) -> float:
        return self.raw / math.sqrt(2)


def cone_accumulate(acc: ConeAccumulator, state, integrand) -> ConeAccumulator:
    """Advance ``acc`` to ``state.t`` with the trapezoid rule in time.

    ``integrand`` is a real grid field or a callable of the state.
    """
    tau, grid = state.t, state.grid
    radius = tau - 1
    if radius < 2 * grid.dx:
        if acc.skipped == 0:
            log.warning("cone radius %.3g below 2dx at tau=%.4g; skipping", radius, tau)
        acc.skipped += 1
        acc.last_tau, acc.last_rate = None, None
        return acc
    f = integrand(state) if callable(integrand) else integrand
    rate = math.sqrt(2) * sphere_integral(grid, np.asarray(f, dtype=float), radius)
    if acc.last_tau is not None:
        if tau <= acc.last_tau:
            raise ValueError("cone accumulator must be updated in time order")
        acc.raw += 0.5 * (acc.last_rate + rate) * (tau - acc.last_tau)
    acc.last_tau, acc.last_rate = tau, rate
    acc.taus.append(tau)
    acc.values.append(acc.raw)
    return acc
