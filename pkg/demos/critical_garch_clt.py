"""Partial sums of a critical GARCH need sqrt(n ln n), not sqrt(n).

Compares the normalized sums for the three-point critical model with the
Gaussian limit of variance beta C, and a subcritical model where the usual
sqrt(n) scaling holds with variance beta / (1 - lambda - delta).
"""

import math

from sreplab.laws import THREE_POINT_NOISE, NoiseLaw
from sreplab.limitlab import clt_experiment, fclt_experiment
from sreplab.rng import make_stream

crit = clt_experiment(1.0, 1.0, 0.0, THREE_POINT_NOISE, [2**10, 2**13, 2**16], 400, make_stream(5))
print(f"critical: target variance beta/ln 2 = {1 / math.log(2):.4f}")
print(" n        KS      IQR scale ratio   variance ratio")
for r in crit.levels:
    print(f"{r['n']:<8} {r['ks']:.4f}  {r['scale_ratio']:.4f}            {r['var_ratio']:.3f}")
# heavy tails of sigma^2 inflate the sample variance; the IQR scale is the robust read

sub = clt_experiment(1.0, 0.25, 0.25, NoiseLaw.standard_normal(), [20_000], 400, make_stream(6))
print(f"\nsubcritical: sample variance / 2 = {sub.levels[0]['var_ratio']:.4f}")

fc = fclt_experiment(1.0, 1.0, 0.0, THREE_POINT_NOISE, 2**14, [0.25, 0.5, 1.0], 400, make_stream(7))
for v in fc.verdicts:
    print(f"{'PASS' if v.passed else 'FAIL'} {v.name}: {v.value}")
