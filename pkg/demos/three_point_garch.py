"""Critical GARCH(1,1) with three-point noise: the one case where everything is exact.

With Z in {-sqrt2, 0, sqrt2} and beta = lambda = 1 the coefficient A = Z^2 is
0 or 2, so the stationary variance is U = 2^T - 1 with T geometric(1/2).
This script samples U, compares the empirical law with 2^-m, and shows how
the truncated mean E U 1{U <= t} creeps up like log2 t.
"""

import math

import numpy as np

from sreplab.analytics import c_lambda_z, solve_kappa, tilted_log_moment
from sreplab.laws import THREE_POINT_NOISE, check_conditions, garch_critical
from sreplab.limitlab import truncated_moment_experiment
from sreplab.rng import make_stream
from sreplab.sre import perpetuity_samples

law = garch_critical(1.0, 1.0, THREE_POINT_NOISE)
print(check_conditions(law).as_dict())
kappa = solve_kappa(law)
m = tilted_log_moment(law, kappa).value
print(f"kappa = {kappa}, E A ln A = {m:.6f} (ln 2 = {math.log(2):.6f}), C = {c_lambda_z(THREE_POINT_NOISE, 1.0).value:.6f}")

u = perpetuity_samples(make_stream(1), law, 200_000).values
T = np.round(np.log2(u + 1)).astype(int)
print("\n m   empirical   2^-m")
for k in range(1, 9):
    print(f"{k:2d}   {np.mean(T == k):.5f}    {2.0**-k:.5f}")

def exact(t):
    M = math.floor(math.log2(t + 1))
    return M - 1 + 2.0**-M

grid = [2.0**k for k in (5, 10, 15, 20, 25, 30)]
rep = truncated_moment_experiment(law, 1.0, grid, 400_000, make_stream(2), method="tilted", exact=exact)
print("\n log2 t   estimate    exact      ratio to log2 t")
for r in rep.levels:
    print(f"{math.log2(r['t']):6.0f}   {r['ell_hat']:8.4f}   {r['exact']:8.4f}   {r['ratio']:.4f}")
