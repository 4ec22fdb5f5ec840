"""Duhamel tails of a short coupled 2D run on the ladder 3, 6, 12.

Prints the tail norms, the direct free-flow comparison and the constants
of the exterior/interior split bound.
"""
from dkglab.scattering import TailMonitor
from dkglab.solver import RunConfig, evolve

cfg = RunConfig.defaults(2, points=96, L=24.0, t_end=12.0, dt_factor=0.1)
mon = TailMonitor((3.0, 6.0, 12.0), hyperboloids=False)
evolve(cfg, [mon])
rep = mon.report()
for w, tail, direct, C in zip(rep["windows"], rep["tail"], rep["direct"], rep["C"]):
    print(f"[{w[0]:g}, {w[1]:g}]  tail {tail:.3e}  direct {direct:.3e}  C {C:.3f}")
print("ratios", [f"{x:.3f}" for x in rep["ratios"]])
