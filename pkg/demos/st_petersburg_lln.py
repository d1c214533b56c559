"""St. Petersburg sums: S_n / (n log2 n) -> 1, but slowly and from above.

The centred quantity S_n/n - log2 n does not settle to a single law; along
n = 2^k it has a semi-stable limit whose median sits near 3.  Dividing by
log2 n therefore leaves a bias of about 3/log2 n, still about 15% at n = 2^20.
"""

import numpy as np

from sreplab.limitlab import IIDSource, wlln_experiment
from sreplab.rng import make_stream
from sreplab.slowvary import PositiveLawY, bruin_bn, ell_log, tail_ratio

stp = PositiveLawY.st_petersburg()
print("tail ratio x P(Y > x) / E Y 1{Y <= x} at x = 2^M:",
      [round(tail_ratio(stp, 2.0**M), 4) for M in (4, 8, 16)])

grid = [2**k for k in (8, 12, 16, 20)]
rep = wlln_experiment(IIDSource(stp, "ell"), grid, 200, make_stream(4))
print("\n log2 n   median   IQR     median*log2 n - log2 n")
for r in rep.levels:
    k = np.log2(r["n"])
    print(f"{k:6.0f}   {r['median']:.4f}  {r['iqr']:.4f}  {r['median'] * k - k:.3f}")
for v in rep.verdicts:
    print(f"{'PASS' if v.passed else 'FAIL'} {v.name}: {v.value}")

print("\nb_n with n ln(b_n) = b_n, against n ln n:")
for n in (10**3, 10**6, 10**9):
    print(f"n = {n:.0e}: b_n = {bruin_bn(ell_log(), n):.6g}, n ln n = {n * np.log(n):.6g}")
