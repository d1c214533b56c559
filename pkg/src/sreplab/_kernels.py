"""Compiled sampling and path kernels.

Laws reach the kernels as five arrays ``(ipar, fpar, tx, ty, tc)`` built by
:func:`sreplab.laws.encode`.  Replication ``r`` of a batch always uses the key
``child_key(root, start + r)``, which equals ``Stream.split(start + r).key``;
outputs are written per replication, so results do not depend on the number of
threads.
"""

import numpy as np
from numba import njit, prange

from .rng import child_key, std_normal, uniform_pair

# coefficient kinds
K_TABLE = 0
K_GARCH = 1
K_LOGNORMAL = 2
K_KEVEI = 3
K_KEVEI_TILTED = 4

# noise kinds
N_TABLE = 0
N_NORMAL = 1
N_STUDENT = 2
N_NORMAL_TILTED = 3

# lanes
LANE_PATH = 0
LANE_INIT = 2
LANE_HORIZON = 3

# perpetuity stop codes
STOP_ZERO = 0
STOP_TOL = 1
STOP_DEPTH = 2
STOP_OVERFLOW = 3
STOP_ABOVE = 4

_MAX_ATTEMPTS = 100000


@njit(cache=True)
def _table_index(tc, u):
    i = np.searchsorted(tc, u)
    if i >= tc.shape[0]:
        i = tc.shape[0] - 1
    return i


@njit(cache=True)
def _normal_pair(key, idx, sub, lane):
    u0, u1 = uniform_pair(key, idx, sub, lane)
    r = np.sqrt(-2.0 * np.log(u0))
    return r * np.cos(2.0 * np.pi * u1), r * np.sin(2.0 * np.pi * u1)


@njit(cache=True)
def _gamma(shape, key, idx, lane, sub0):
    # Marsaglia-Tsang, shape >= 1
    d = shape - 1.0 / 3.0
    c = 1.0 / np.sqrt(9.0 * d)
    for it in range(_MAX_ATTEMPTS):
        x = std_normal(key, idx, sub0 + 2 * it, lane)
        v = 1.0 + c * x
        if v <= 0.0:
            continue
        v = v * v * v
        u, _ = uniform_pair(key, idx, sub0 + 2 * it + 1, lane)
        if np.log(u) < 0.5 * x * x + d - d * v + d * np.log(v):
            return d * v
    return d


@njit(cache=True)
def draw_noise(kind, p0, p1, tx, tc, key, idx, lane):
    """One draw of Z.  ``p0``/``p1`` are kind-specific parameters."""
    if kind == N_TABLE:
        u, _ = uniform_pair(key, idx, 0, lane)
        return tx[_table_index(tc, u)]
    if kind == N_NORMAL:
        return std_normal(key, idx, 0, lane)
    if kind == N_STUDENT:
        df = p0
        z = std_normal(key, idx, 0, lane)
        g = 2.0 * _gamma(0.5 * df, key, idx, lane, 1)
        return z / np.sqrt(g / df) * np.sqrt((df - 2.0) / df)
    # N_NORMAL_TILTED: density (delta + lam z^2) phi(z) / (lam + delta); p0 = lam/(lam+delta)
    n1, n2 = _normal_pair(key, idx, 0, lane)
    n3, _ = _normal_pair(key, idx, 1, lane)
    u, s = uniform_pair(key, idx, 2, lane)
    if u < p0:
        r = np.sqrt(n1 * n1 + n2 * n2 + n3 * n3)
        return r if s < 0.5 else -r
    return n1


@njit(cache=True)
def _kevei_v(alpha, kappa, v0, key, idx, lane):
    for it in range(_MAX_ATTEMPTS):
        u0, u1 = uniform_pair(key, idx, 1 + it, lane)
        v = v0 * u0 ** (-1.0 / alpha)
        if u1 < np.exp(-kappa * (v - v0)):
            return v
    return v0


@njit(cache=True)
def _kevei_logab(ipar, fpar, key, idx, lane):
    u, _ = uniform_pair(key, idx, 0, lane)
    if ipar[0] == K_KEVEI:
        if u < fpar[3]:
            return _kevei_v(fpar[0], fpar[1], fpar[2], key, idx, lane), fpar[5]
        return -fpar[4], fpar[5]
    if u < fpar[2]:
        w, _ = uniform_pair(key, idx, 1, lane)
        return fpar[1] * w ** (-1.0 / fpar[0]), fpar[4]
    return -fpar[3], fpar[4]


@njit(cache=True)
def draw_ab(ipar, fpar, tx, ty, tc, key, idx, lane):
    """One (A, B) draw."""
    kind = ipar[0]
    if kind == K_TABLE:
        u, _ = uniform_pair(key, idx, 0, lane)
        i = _table_index(tc, u)
        return tx[i], ty[i]
    if kind == K_GARCH:
        z = draw_noise(ipar[1], fpar[3], fpar[4], tx, tc, key, idx, lane)
        return fpar[1] * z * z + fpar[2], fpar[0]
    if kind == K_LOGNORMAL:
        return np.exp(fpar[0] + fpar[1] * std_normal(key, idx, 0, lane)), fpar[2]
    la, b = _kevei_logab(ipar, fpar, key, idx, lane)
    return np.exp(la), b


@njit(cache=True)
def draw_logab(ipar, fpar, tx, ty, tc, key, idx, lane):
    """One (ln A, B) draw; ln A may be -inf (A = 0) or exceed the float range of A."""
    kind = ipar[0]
    if kind == K_KEVEI or kind == K_KEVEI_TILTED:
        return _kevei_logab(ipar, fpar, key, idx, lane)
    if kind == K_LOGNORMAL:
        return fpar[0] + fpar[1] * std_normal(key, idx, 0, lane), fpar[2]
    a, b = draw_ab(ipar, fpar, tx, ty, tc, key, idx, lane)
    if a > 0.0:
        return np.log(a), b
    return -np.inf, b


@njit(cache=True, parallel=True)
def noise_batch(kind, p0, p1, tx, tc, key, count):
    out = np.empty(count)
    for i in prange(count):
        out[i] = draw_noise(kind, p0, p1, tx, tc, key, i, LANE_PATH)
    return out


@njit(cache=True, parallel=True)
def coeff_batch(ipar, fpar, tx, ty, tc, key, count):
    a = np.empty(count)
    b = np.empty(count)
    for i in prange(count):
        a[i], b[i] = draw_ab(ipar, fpar, tx, ty, tc, key, i, LANE_PATH)
    return a, b


@njit(cache=True)
def perpetuity_one(ipar, fpar, tx, ty, tc, key, lane, tol, max_depth):
    """Series sum stopped when the running product hits 0, drops below ``tol``,
    or ``max_depth`` terms were used.  Returns (value, depth, stop code, product)."""
    u = 0.0
    prod = 1.0
    k = 0
    while True:
        a, b = draw_ab(ipar, fpar, tx, ty, tc, key, k, lane)
        u += prod * b
        prod *= a
        k += 1
        if not np.isfinite(u) or not np.isfinite(prod):
            return u, k, STOP_OVERFLOW, prod
        if prod == 0.0:
            return u, k, STOP_ZERO, prod
        if prod < tol:
            return u, k, STOP_TOL, prod
        if k >= max_depth:
            return u, k, STOP_DEPTH, prod


@njit(cache=True, parallel=True)
def perpetuity_batch(ipar, fpar, tx, ty, tc, root, start, reps, tol, max_depth):
    u = np.empty(reps)
    depth = np.empty(reps, dtype=np.int64)
    stop = np.empty(reps, dtype=np.int8)
    resid = np.empty(reps)
    for r in prange(reps):
        key = child_key(root, start + r)
        u[r], depth[r], stop[r], resid[r] = perpetuity_one(
            ipar, fpar, tx, ty, tc, key, LANE_PATH, tol, max_depth
        )
    return u, depth, stop, resid


@njit(cache=True)
def _logaddexp(x, y):
    if x == -np.inf:
        return y
    if y == -np.inf:
        return x
    if x > y:
        return x + np.log1p(np.exp(y - x))
    return y + np.log1p(np.exp(x - y))


@njit(cache=True, parallel=True)
def perpetuity_tilted_batch(
    ipar, fpar, tx, ty, tc, jpar, gpar, sx, sy, sc,
    root, start, reps, kappa, log_cut, tol, max_depth, horizon_cap,
):
    """Importance-sampled perpetuity draws.

    The first ``N`` pairs come from the ``A**kappa``-tilted law (``jpar``...),
    the rest from the original law, with ``P(N = n) = 1/((n+1)(n+2))`` capped at
    ``horizon_cap``.  The returned log-weight is ``-log sum_n P(N=n) M_n`` with
    ``M_n = prod_{j<=n} A_j**kappa``, i.e. the likelihood ratio of the mixture.
    Draws whose value already exceeds ``exp(log_cut)`` stop early.
    """
    log_u = np.empty(reps)
    log_w = np.empty(reps)
    stop = np.empty(reps, dtype=np.int8)
    log_tol = np.log(tol)
    for r in prange(reps):
        key = child_key(root, start + r)
        uh, _ = uniform_pair(key, 0, 0, LANE_HORIZON)
        nf = np.floor(1.0 / uh) - 1.0
        horizon = horizon_cap if nf >= horizon_cap else np.int64(nf)
        lu = -np.inf
        lpi = 0.0
        lden = np.log(0.5)
        code = STOP_DEPTH
        k = 0
        while k < max_depth:
            if k < horizon:
                la, b = draw_logab(jpar, gpar, sx, sy, sc, key, k, LANE_PATH)
            else:
                la, b = draw_logab(ipar, fpar, tx, ty, tc, key, k, LANE_PATH)
            if b > 0.0:
                lu = _logaddexp(lu, np.log(b) + lpi)
            lpi += la
            k += 1
            if k < horizon_cap:
                lden = _logaddexp(lden, kappa * lpi - np.log((k + 1.0) * (k + 2.0)))
            elif k == horizon_cap:
                lden = _logaddexp(lden, kappa * lpi - np.log(k + 1.0))
            if lu > log_cut:
                code = STOP_ABOVE
                break
            if k >= horizon:
                if lpi == -np.inf:
                    code = STOP_ZERO
                    break
                if lpi < log_tol:
                    code = STOP_TOL
                    break
        log_u[r] = lu
        log_w[r] = -lden
        stop[r] = code
    return log_u, log_w, stop


@njit(cache=True)
def _stationary_start(ipar, fpar, tx, ty, tc, key, mode, value, tol, max_depth):
    if mode == 0:
        u, _, code, _ = perpetuity_one(ipar, fpar, tx, ty, tc, key, LANE_INIT, tol, max_depth)
        return u, code
    if mode == 1:
        return value, STOP_ZERO
    return 0.0, STOP_ZERO


@njit(cache=True, parallel=True)
def sre_path_batch(
    ipar, fpar, tx, ty, tc, root, start, reps, n, mode, u0_value, kappa, snaps, tol, max_depth
):
    """Forward recursion U_j = A_j U_{j-1} + B_j; partial sums of U_j**kappa at ``snaps``."""
    ns = snaps.shape[0]
    sums = np.zeros((reps, ns))
    last = np.empty(reps)
    flags = np.zeros(reps, dtype=np.int8)
    for r in prange(reps):
        key = child_key(root, start + r)
        u, code = _stationary_start(ipar, fpar, tx, ty, tc, key, mode, u0_value, tol, max_depth)
        if code == STOP_DEPTH or code == STOP_OVERFLOW:
            flags[r] = code
        s = 0.0
        si = 0
        for j in range(1, n + 1):
            a, b = draw_ab(ipar, fpar, tx, ty, tc, key, j - 1, LANE_PATH)
            u = a * u + b
            if kappa == 1.0:
                s += u
            else:
                s += u**kappa
            while si < ns and snaps[si] == j:
                sums[r, si] = s
                si += 1
        if not np.isfinite(s):
            flags[r] = STOP_OVERFLOW
        last[r] = u
    return sums, last, flags


@njit(cache=True, parallel=True)
def sre_trajectory_batch(ipar, fpar, tx, ty, tc, root, start, reps, n, mode, u0_value, tol, max_depth):
    """Full trajectories U_0..U_n (one row per replication)."""
    out = np.empty((reps, n + 1))
    flags = np.zeros(reps, dtype=np.int8)
    for r in prange(reps):
        key = child_key(root, start + r)
        u, code = _stationary_start(ipar, fpar, tx, ty, tc, key, mode, u0_value, tol, max_depth)
        if code == STOP_DEPTH or code == STOP_OVERFLOW:
            flags[r] = code
        out[r, 0] = u
        for j in range(1, n + 1):
            a, b = draw_ab(ipar, fpar, tx, ty, tc, key, j - 1, LANE_PATH)
            u = a * u + b
            out[r, j] = u
    return out, flags


@njit(cache=True, parallel=True)
def garch_path_batch(
    ipar, fpar, tx, ty, tc, root, start, reps, n, mode, s0_value, snaps, tol, max_depth, lind_level
):
    """GARCH(1,1): sigma2_j = beta + (lam Z_{j-1}^2 + delta) sigma2_{j-1}, X_j = sigma_j Z_j.

    Returns per replication and snapshot: sum X, sum X^2, sum sigma2, and the
    sum of sigma2_j over steps with sigma2_j > ``lind_level`` (0 disables).
    """
    beta, lam, delta = fpar[0], fpar[1], fpar[2]
    nk = ipar[1]
    ns = snaps.shape[0]
    out = np.zeros((reps, ns, 4))
    s0 = np.empty(reps)
    flags = np.zeros(reps, dtype=np.int8)
    for r in prange(reps):
        key = child_key(root, start + r)
        s2, code = _stationary_start(ipar, fpar, tx, ty, tc, key, mode, s0_value, tol, max_depth)
        if code == STOP_DEPTH or code == STOP_OVERFLOW:
            flags[r] = code
        s0[r] = s2
        z = draw_noise(nk, fpar[3], fpar[4], tx, tc, key, 0, LANE_PATH)
        sx = 0.0
        sxx = 0.0
        ss = 0.0
        sl = 0.0
        si = 0
        for j in range(1, n + 1):
            s2 = (lam * z * z + delta) * s2 + beta
            z = draw_noise(nk, fpar[3], fpar[4], tx, tc, key, j, LANE_PATH)
            x = np.sqrt(s2) * z
            sx += x
            sxx += x * x
            ss += s2
            if lind_level > 0.0 and s2 > lind_level:
                sl += s2
            while si < ns and snaps[si] == j:
                out[r, si, 0] = sx
                out[r, si, 1] = sxx
                out[r, si, 2] = ss
                out[r, si, 3] = sl
                si += 1
        if not np.isfinite(ss):
            flags[r] = STOP_OVERFLOW
    return out, s0, flags


@njit(cache=True)
def garch_trajectory(ipar, fpar, tx, ty, tc, key, n, mode, s0_value, tol, max_depth):
    beta, lam, delta = fpar[0], fpar[1], fpar[2]
    nk = ipar[1]
    x = np.empty(n)
    s = np.empty(n + 1)
    s2, _ = _stationary_start(ipar, fpar, tx, ty, tc, key, mode, s0_value, tol, max_depth)
    s[0] = s2
    z = draw_noise(nk, fpar[3], fpar[4], tx, tc, key, 0, LANE_PATH)
    for j in range(1, n + 1):
        s2 = (lam * z * z + delta) * s2 + beta
        z = draw_noise(nk, fpar[3], fpar[4], tx, tc, key, j, LANE_PATH)
        s[j] = s2
        x[j - 1] = np.sqrt(s2) * z
    return x, s


# --- i.i.d. positive variables -------------------------------------------------

Y_PARETO_ONE = 0
Y_ST_PETERSBURG = 1
Y_TABLE = 2


@njit(cache=True)
def draw_y(kind, table, key, idx, lane):
    u, _ = uniform_pair(key, idx, 0, lane)
    if kind == Y_PARETO_ONE:
        return 1.0 / u
    if kind == Y_ST_PETERSBURG:
        t = np.ceil(-np.log2(u))
        if t < 1.0:
            t = 1.0
        return 2.0**t
    i = np.int64(u * table.shape[0])
    if i >= table.shape[0]:
        i = table.shape[0] - 1
    return table[i]


@njit(cache=True, parallel=True)
def iid_sum_batch(kind, table, root, start, reps, snaps, clip_levels):
    """Partial sums of i.i.d. Y at ``snaps``.

    ``out[r, s, 0]`` is the sum of the first ``snaps[s]`` draws and
    ``out[r, s, 1 + c]`` the sum of ``min(Y_j, clip_levels[s, c])`` over the same draws.
    """
    ns = snaps.shape[0]
    nc = clip_levels.shape[1]
    out = np.zeros((reps, ns, nc + 1))
    n = snaps[ns - 1]
    for r in prange(reps):
        key = child_key(root, start + r)
        total = 0.0
        clipped = np.zeros((ns, nc))
        si = 0
        for j in range(1, n + 1):
            y = draw_y(kind, table, key, j - 1, LANE_PATH)
            total += y
            for s in range(si, ns):
                for c in range(nc):
                    lev = clip_levels[s, c]
                    clipped[s, c] += y if y < lev else lev
            while si < ns and snaps[si] == j:
                out[r, si, 0] = total
                for c in range(nc):
                    out[r, si, 1 + c] = clipped[si, c]
                si += 1
    return out


@njit(cache=True, parallel=True)
def iid_truncation_batch(kind, table, root, start, reps, per_rep, levels):
    """Per replication: sum of Y*1{Y<=x} and count of Y>x over ``per_rep`` draws, per level x."""
    nl = levels.shape[0]
    trunc = np.zeros((reps, nl))
    above = np.zeros((reps, nl))
    for r in prange(reps):
        key = child_key(root, start + r)
        for j in range(per_rep):
            y = draw_y(kind, table, key, j, LANE_PATH)
            for i in range(nl):
                if y <= levels[i]:
                    trunc[r, i] += y
                else:
                    above[r, i] += 1.0
    return trunc, above


@njit(cache=True, parallel=True)
def iid_trajectory_batch(kind, table, root, start, reps, n):
    out = np.empty((reps, n + 1))
    for r in prange(reps):
        key = child_key(root, start + r)
        for j in range(n + 1):
            out[r, j] = draw_y(kind, table, key, j, LANE_PATH)
    return out
