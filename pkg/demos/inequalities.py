"""Ratio statistics of every inequality id on a small sample batch."""
from dkglab.inequality_lab import INEQ_IDS, check

print(f"{'id':16s} {'max':>10s} {'median':>10s} {'refined':>10s} {'change':>8s}  pass")
for iid in INEQ_IDS:
    r = check(iid, "mixed", {"resolution": 64, "L": 16.0}, samples=8, seed=1)
    print(f"{iid:16s} {r.max:10.4f} {r.median:10.4f} {r.max_refined:10.4f} {r.change:8.3f}  {r.passed}")
