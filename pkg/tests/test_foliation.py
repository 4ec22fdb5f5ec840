import math

import numpy as np
import pytest

from dkglab.fields import GridSpec, SimState
from dkglab.foliation import (
    ConeAccumulator,
    CoverageError,
    StreamingHyperboloids,
    classify,
    cone_accumulate,
    hyperboloid_slice,
    r_of_s,
    slice_nodes,
    sphere_integral,
    t_of_s,
)
from dkglab.solver import History, HistoryRecorder, RunConfig, evolve


def _history(grid, fn, t0=2.0, t1=4.0, dt=0.01):
    h = History(dt)
    for t in np.arange(t0, t1 + dt / 2, dt):
        v = fn(t, grid)
        h.offer(SimState(t=float(t), psi=np.zeros((2,) + grid.shape, complex), v=v,
                         vt=np.zeros(grid.shape), M=0.0, grid=grid))
    return h


def test_classify_examples():
    assert classify(2.0, [1.0, 0.0]) == "exterior"
    assert classify(10.0, [3.0, 4.0]) == "interior"
    with pytest.raises(ValueError):
        classify(1.5, [0.0, 0.0])


def test_hyperboloid_meets_cone_at_s2():
    assert t_of_s(2.0) == 2.5 and r_of_s(2.0) == 1.5
    assert classify(2.5, [1.5, 0.0]) == "exterior"
    assert t_of_s(2.0) - 1 == r_of_s(2.0)


def test_interior_and_exterior_partition_the_slice():
    g = GridSpec(2, 64, 8.0)
    s = 3.0
    full, *_ = slice_nodes(g, s, "full", rmax=7.0)
    inn, xi, _ = slice_nodes(g, s, "interior", rmax=7.0)
    ext, xe, _ = slice_nodes(g, s, "exterior", rmax=7.0)
    assert len(np.intersect1d(inn, ext)) == 0
    np.testing.assert_array_equal(np.sort(np.concatenate([inn, ext])), full)
    assert np.all(np.linalg.norm(xi, axis=0) < r_of_s(s))
    assert np.all(np.linalg.norm(xe, axis=0) >= r_of_s(s))


def test_slice_of_constant_field():
    g = GridSpec(2, 32, 4.0)
    h = _history(g, lambda t, gr: np.full(gr.shape, 1.25))
    sl = hyperboloid_slice(h, 2.0, "full", fields=("v",), rmax=2.5)
    np.testing.assert_allclose(sl.values["v"], 1.25, rtol=0, atol=1e-13)


def test_slice_of_time_field():
    g = GridSpec(2, 32, 4.0)
    h = _history(g, lambda t, gr: np.full(gr.shape, t))
    sl = hyperboloid_slice(h, 2.0, "full", fields=("v",), rmax=2.5)
    exact = np.sqrt(4.0 + np.sum(sl.x**2, axis=0))
    assert np.max(np.abs(sl.values["v"] - exact)) <= 1e-9


def test_slice_respects_pointwise_bound():
    g = GridSpec(2, 32, 4.0)
    h = _history(g, lambda t, gr: np.sin(3 * t) * np.exp(-gr.r**2))
    sl = hyperboloid_slice(h, 2.0, "full", fields=("v",), rmax=2.5)
    bound = np.exp(-sl.r**2)
    assert np.all(np.abs(sl.values["v"]) <= bound + 1e-6)


def test_interior_ball_volume():
    g = GridSpec(2, 128, 10.0)
    s = 4.0
    idx, *_ = slice_nodes(g, s, "interior")
    area = idx.size * g.cell
    assert abs(area / (math.pi * r_of_s(s) ** 2) - 1) <= 0.02


def test_coverage_error_names_the_range():
    g = GridSpec(2, 32, 4.0)
    h = _history(g, lambda t, gr: np.zeros(gr.shape), t1=2.5)
    with pytest.raises(CoverageError) as err:
        hyperboloid_slice(h, 2.0, "full", fields=("v",), rmax=2.5)
    assert "required" in str(err.value)


def test_streaming_slices_match_stored_history():
    cfg = RunConfig(n=2, points=32, L=12.0, t_end=4.0, eps0=0.1, width=1.0, dt_factor=0.2)
    rec = HistoryRecorder(cfg.dt)
    stream = StreamingHyperboloids([2.0], ("v",), "full", rmax=2.5)
    evolve(cfg, [rec, stream])
    a = stream.slice(2.0)
    b = hyperboloid_slice(rec.history, 2.0, "full", fields=("v",), rmax=2.5)
    order = np.argsort(a.index)
    np.testing.assert_array_equal(a.index[order], b.index)
    np.testing.assert_allclose(a.values["v"][order], b.values["v"], atol=1e-14)


def _states(grid, taus):
    for tau in taus:
        yield SimState(t=float(tau), psi=np.zeros((2,) + grid.shape, complex), v=np.zeros(grid.shape),
                       vt=np.zeros(grid.shape), M=0.0, grid=grid)


def test_cone_accumulate_zero_integrand():
    g = GridSpec(2, 64, 8.0)
    acc = ConeAccumulator()
    for st in _states(g, np.linspace(2, 3, 11)):
        cone_accumulate(acc, st, np.zeros(g.shape))
    assert acc.raw == 0.0


def test_cone_accumulate_unit_integrand():
    g = GridSpec(2, 64, 8.0)
    acc = ConeAccumulator()
    for st in _states(g, np.linspace(2, 3, 21)):
        cone_accumulate(acc, st, np.ones(g.shape))
    exact = math.sqrt(2) * 2 * math.pi * 1.5
    assert abs(acc.raw / exact - 1) <= 0.01
    assert abs(acc.normalized - 2 * math.pi * 1.5) <= 0.01 * 2 * math.pi * 1.5


def test_cone_accumulate_skips_near_origin():
    g = GridSpec(2, 16, 8.0)
    acc = ConeAccumulator()
    st = next(_states(g, [2.1]))
    cone_accumulate(acc, st, np.ones(g.shape))
    assert acc.skipped == 1 and acc.raw == 0.0


def test_sphere_integral_of_radial_gaussian():
    for n, area in ((2, 2 * math.pi * 2.0), (3, 4 * math.pi * 4.0)):
        g = GridSpec(n, 48, 6.0)
        f = np.exp(-(g.r**2) / 9)
        got = sphere_integral(g, f, 2.0)
        assert abs(got / (area * math.exp(-4 / 9)) - 1) < 1e-4
