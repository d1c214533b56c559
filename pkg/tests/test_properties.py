"""Property tests of structural invariants."""

import math

import numpy as np
from hypothesis import assume, given, strategies as st

from sreplab.analytics import (
    SlowVariationProfile,
    c_lambda_z,
    g_A_log,
    h_A,
    psi,
    solve_kappa,
    tilted_log_moment,
)
from sreplab.laws import DiscreteLaw, NoiseLaw, garch_to_sre
from sreplab.rng import make_stream
from sreplab.slowvary import PositiveLawY, bruin_bn, bruin_residual, ell_const, truncated_mean
from sreplab.sre import chi_h, perpetuity_sample

atom_a = st.floats(0.05, 4.0)
prob = st.floats(0.05, 0.95)


@st.composite
def two_atom_laws(draw):
    """A in {a_lo < 1, a_hi > 1} with E ln A < 0, so a positive kappa exists."""
    lo = draw(st.floats(0.05, 0.9))
    hi = draw(st.floats(1.1, 4.0))
    p_hi = draw(st.floats(0.05, 0.9))
    assume(p_hi * math.log(hi) + (1 - p_hi) * math.log(lo) < -0.01)
    assume(p_hi * hi**40 > 1.5)  # root reachable inside a moderate bracket
    return DiscreteLaw((((lo, 1.0), 1 - p_hi), ((hi, 1.0), p_hi)))


@st.composite
def symmetric_noises(draw):
    """Z = +-a with probability q each and 0 otherwise, E Z^2 = 1."""
    a = draw(st.floats(1.05, 5.0))
    q = 0.5 / a**2
    return NoiseLaw.discrete([(a, q), (0.0, 1 - 2 * q), (-a, q)])


@given(two_atom_laws(), st.floats(0.1, 5.0), st.floats(0.1, 5.0))
def test_psi_is_convex(law, p, q):
    mid = psi(law, 0.5 * (p + q)).value
    assert mid <= 0.5 * (psi(law, p).value + psi(law, q).value) * (1 + 1e-12)


@given(two_atom_laws())
def test_kappa_plugs_back(law):
    k = solve_kappa(law)
    assert k > 0
    assert abs(psi(law, k).value - 1.0) < 1e-9


@given(two_atom_laws())
def test_tilted_log_moment_positive_at_kappa(law):
    k = solve_kappa(law)
    assert tilted_log_moment(law, k).value > 0


@given(symmetric_noises(), st.floats(0.05, 1.0))
def test_c_lambda_z_is_reciprocal_tilted_log_moment(noise, lam):
    law = garch_to_sre(1.0, lam, 1.0 - lam, noise)
    c = c_lambda_z(noise, lam).value
    m = tilted_log_moment(law, 1.0).value
    assert math.isclose(c * m, 1.0, rel_tol=1e-10)


@given(symmetric_noises(), st.floats(0.05, 1.0), st.floats(0.01, 50.0), st.floats(0.01, 50.0))
def test_h_A_nondecreasing_and_bounded(noise, lam, x, y):
    law = garch_to_sre(1.0, lam, 1.0 - lam, noise)
    lo, hi = sorted((x, y))
    assert h_A(law, 1.0, lo) <= h_A(law, 1.0, hi) + 1e-15
    assert h_A(law, 1.0, hi) <= tilted_log_moment(law, 1.0).detail["plus"] * (1 + 1e-12)


@given(st.floats(1.0, 700.0))
def test_g_A_continuous_at_rho_zero(log_t):
    flat = SlowVariationProfile.regvar(0.0, lambda x: 1.5)
    near = SlowVariationProfile.regvar(1e-9, lambda x: 1.5)
    a, b = g_A_log(flat, log_t), g_A_log(near, log_t)
    assert math.isclose(a, b, rel_tol=1e-7)


@given(st.floats(-1e6, 1e6), st.floats(1e-3, 1e3))
def test_chi_h_clips(x, h):
    y = chi_h(x, h)
    assert abs(y) <= h
    assert chi_h(y, h) == y
    if abs(x) <= h:
        assert y == x


@given(two_atom_laws(), st.integers(0, 2**32))
def test_perpetuity_grows_with_depth(law, seed):
    s = make_stream(seed)
    coarse = perpetuity_sample(s, law, tol=1e-3)
    fine = perpetuity_sample(s, law, tol=1e-12)
    assert 1.0 <= coarse <= fine


@given(st.floats(0.1, 100.0), st.integers(2, 10**9))
def test_bruin_bn_constant_ell(c, n):
    b = bruin_bn(ell_const(c), n)
    assert math.isclose(b, n * c, rel_tol=1e-12)
    assert bruin_residual(ell_const(c), n, b) < 1e-9


@given(st.floats(1.0, 1e12), st.floats(1.0, 1e12))
def test_truncated_mean_monotone(x, y):
    lo, hi = sorted((x, y))
    for law in (PositiveLawY.pareto_one(), PositiveLawY.st_petersburg()):
        assert truncated_mean(law, lo) <= truncated_mean(law, hi)


@given(st.integers(0, 2**63), st.integers(0, 1000))
def test_stream_split_is_pure(seed, index):
    a = make_stream(seed).split(index).uniforms(4)
    b = make_stream(seed).split(index).uniforms(4)
    assert np.array_equal(a, b)


@given(st.floats(0.01, 10.0), st.floats(0.5, 700.0))
def test_g_A_flat_regvar_matches_finite(m, log_t):
    flat = SlowVariationProfile.regvar(0.0, lambda x: m)
    assert math.isclose(g_A_log(flat, log_t), g_A_log(SlowVariationProfile.finite(m), log_t), rel_tol=1e-14)
