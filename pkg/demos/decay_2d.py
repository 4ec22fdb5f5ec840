"""A reduced 2D coupled run with the sup-norm decay fit.

The default run (256 points, t = 40) is what the acceptance criteria use;
this one is smaller so it finishes in about a minute.
"""
from dkglab.functionals import Observables, decay_fit, last_quarter_growth
from dkglab.solver import RunConfig, evolve

cfg = RunConfig.defaults(2, points=128, L=30.0, t_end=20.0)
ob = Observables(4)
evolve(cfg, [ob])
t, v = ob.get("sup_v")
fit = decay_fit(t, v, (8.0, 20.0))
_, prof = ob.get("profile")
print(f"sup|v| ~ t^{fit.exponent:.3f} (+- {fit.stderr:.3f}) over t in [8, 20]")
print(f"interior profile last-quarter growth {last_quarter_growth(t, prof, (8.0, 20.0)):+.3f}")
for ti, vi in list(zip(t, v))[:: len(t) // 8]:
    print(f"  t = {ti:6.2f}  sup|v| = {vi:.3e}")
