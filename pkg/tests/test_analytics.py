import math

import numpy as np
import pytest

from sreplab.analytics import (
    Estimate,
    NoRootError,
    SlowVariationProfile,
    c_lambda_z,
    d_constant,
    expected_b,
    fit_profile,
    g_A,
    g_A_log,
    h_A,
    kesten_constant,
    psi,
    solve_kappa,
    tilted_log_moment,
)
from sreplab.laws import (
    THREE_POINT_NOISE,
    DiscreteLaw,
    LognormalLaw,
    NoiseLaw,
    build_kevei_law,
    garch_critical,
    garch_to_sre,
)
from sreplab.rng import make_stream

THREE_POINT = garch_critical(1.0, 1.0, THREE_POINT_NOISE)
TWO_ATOM = DiscreteLaw((((0.5, 1.0), 0.6), ((1.5, 1.0), 0.4)))
KEVEI = build_kevei_law(0.5, 1.0, 0.05, 0.3, 1.0)

# Frozen oracle values (bisection, digamma closed form, brute-force simulation
# with an unrelated generator, direct quadrature in the original variables)
KAPPA_TWO_ATOM = 1.7898035015167144
D_TWO_ATOM, D_TWO_ATOM_SE = 9.387925988074876, 0.004956987652526669
KAPPA_NORMAL_05_03 = 1.7723807778036442
E_Z2_LOG_Z2_NORMAL = 0.7296371545385218
C_NORMAL_LAMBDA_1 = 1.3705442407637207
C_STUDENT5_LAMBDA_1 = 0.9102392266278098
KEVEI_H_AT_10 = 0.6264999667575107


def test_psi_closed_forms():
    assert psi(THREE_POINT, 3.0).value == pytest.approx(0.5 * 8.0, rel=1e-14)
    ln = LognormalLaw(-1.0, 1.0)
    assert psi(ln, 1.5).value == pytest.approx(math.exp(-1.5 + 0.5 * 2.25), rel=1e-14)
    assert psi(KEVEI, 1.0).value == pytest.approx(1.0, abs=1e-12)
    assert math.isinf(psi(KEVEI, 1.2).value)
    assert math.isinf(psi(garch_critical(1.0, 1.0, NoiseLaw.student_t(4.0)), 2.0).value)
    with pytest.raises(ValueError):
        psi(THREE_POINT, 0.0)


def test_solve_kappa_against_oracles():
    assert solve_kappa(THREE_POINT) == 1.0
    assert solve_kappa(TWO_ATOM) == pytest.approx(KAPPA_TWO_ATOM, abs=1e-10)
    assert solve_kappa(LognormalLaw(-0.5, 1.0)) == pytest.approx(1.0, abs=1e-10)
    assert solve_kappa(LognormalLaw(-1.0, 1.0)) == pytest.approx(2.0, abs=1e-10)
    normal = garch_to_sre(1.0, 0.5, 0.3, NoiseLaw.standard_normal())
    assert solve_kappa(normal) == pytest.approx(KAPPA_NORMAL_05_03, abs=1e-9)
    assert solve_kappa(KEVEI) == 1.0


def test_solve_kappa_below_one_side():
    small = LognormalLaw(-3.0, 4.0)  # kappa = 2 * 3 / 16
    assert solve_kappa(small) == pytest.approx(0.375, abs=1e-10)


def test_solve_kappa_no_root():
    with pytest.raises(NoRootError):
        solve_kappa(DiscreteLaw((((0.5, 1.0), 0.5), ((1.0, 1.0), 0.5))))


def test_tilted_log_moment():
    tlm = tilted_log_moment(THREE_POINT, 1.0)
    assert tlm.value == pytest.approx(math.log(2.0), rel=1e-14)
    assert tlm.detail["minus"] == 0.0
    normal = garch_critical(1.0, 1.0, NoiseLaw.standard_normal())
    assert tilted_log_moment(normal, 1.0).value == pytest.approx(E_Z2_LOG_Z2_NORMAL, rel=1e-10)
    # d/dp exp(p mu + p^2 sigma^2 / 2) at p = 2 with mu = -1, sigma = 1
    assert tilted_log_moment(LognormalLaw(-1.0, 1.0), 2.0).value == pytest.approx(1.0, rel=1e-9)
    assert math.isinf(tilted_log_moment(KEVEI, 1.0).detail["plus"])


def test_h_A():
    assert h_A(THREE_POINT, 1.0, 0.1) == pytest.approx(0.1, rel=1e-14)
    assert h_A(THREE_POINT, 1.0, 5.0) == pytest.approx(math.log(2.0), rel=1e-14)
    assert h_A(KEVEI, 1.0, 10.0) == pytest.approx(KEVEI_H_AT_10, rel=1e-9)
    with pytest.raises(ValueError):
        h_A(THREE_POINT, 1.0, 0.0)


def test_h_A_tends_to_tilted_log_moment():
    normal = garch_critical(1.0, 0.7, NoiseLaw.standard_normal())
    plus = tilted_log_moment(normal, 1.0).detail["plus"]
    assert h_A(normal, 1.0, 60.0) == pytest.approx(plus, rel=1e-8)


def test_fit_profile_branches():
    fin = fit_profile(THREE_POINT, 1.0, np.geomspace(1, 1e4, 41))
    assert fin.branch == "finite" and fin.m == pytest.approx(math.log(2))
    reg = fit_profile(KEVEI, 1.0, np.geomspace(1, 1e4, 41))
    assert reg.branch == "regvar"
    assert reg.rho == pytest.approx(0.5, abs=0.05)
    with pytest.raises(ValueError, match="two decades"):
        fit_profile(KEVEI, 1.0, np.linspace(1, 10, 5))


def test_g_A_branches():
    fin = SlowVariationProfile.finite(math.log(2))
    assert g_A(fin, 2.0**20) == pytest.approx(20.0, rel=1e-13)
    flat = SlowVariationProfile.regvar(0.0, lambda x: 2.0)
    assert g_A(flat, math.e**6) == pytest.approx(3.0)
    half = SlowVariationProfile.regvar(0.5, lambda x: 1.0)
    assert g_A_log(half, 16.0) == pytest.approx(4.0 / math.pi * 4.0, rel=1e-13)
    with pytest.raises(ValueError):
        g_A(fin, 1.0)
    with pytest.raises(ValueError):
        SlowVariationProfile.regvar(1.0, lambda x: 1.0)
    with pytest.raises(ValueError):
        SlowVariationProfile.finite(-1.0)


def test_d_constant_exact_at_kappa_one():
    est = d_constant(THREE_POINT, 1.0, make_stream(1), 10_000)
    assert est.value == 1.0 and est.analytic
    assert expected_b(TWO_ATOM) == 1.0


def test_d_constant_monte_carlo_matches_brute_force():
    est = d_constant(TWO_ATOM, KAPPA_TWO_ATOM, make_stream(2), 200_000)
    assert est.method == "monte carlo" and est.std_error > 0
    assert abs(est.value - D_TWO_ATOM) <= 4 * math.hypot(est.std_error, D_TWO_ATOM_SE)
    with pytest.raises(ValueError):
        d_constant(TWO_ATOM, KAPPA_TWO_ATOM, make_stream(2), 100)


def test_kesten_constant():
    kc = kesten_constant(1.0, 1.0, math.log(2), "fail")
    assert kc.c_prime == pytest.approx(1 / math.log(2)) and kc.tail_constant is None
    kc = kesten_constant(2.0, 2.0, 0.5, "pass")
    assert kc.tail_constant == pytest.approx(2.0)


def test_c_lambda_z_values():
    assert c_lambda_z(NoiseLaw.standard_normal(), 1.0).value == pytest.approx(C_NORMAL_LAMBDA_1, rel=1e-10)
    assert c_lambda_z(NoiseLaw.student_t(5.0), 1.0).value == pytest.approx(C_STUDENT5_LAMBDA_1, rel=1e-9)
    expected = 2.0 / (1.5 * math.log(1.5) + 0.5 * math.log(0.5))
    assert c_lambda_z(THREE_POINT_NOISE, 0.5).value == pytest.approx(expected, abs=1e-12)
    with pytest.raises(ValueError):
        c_lambda_z(NoiseLaw.discrete([(1.0, 0.5), (-1.0, 0.5)]), 0.5)
    with pytest.raises(ValueError):
        c_lambda_z(THREE_POINT_NOISE, 1.5)


def test_estimate_interval():
    e = Estimate(1.0, 0.5)
    assert e.ci95 == pytest.approx((1.0 - 0.98, 1.0 + 0.98), abs=1e-3)
    assert set(e.as_dict()) == {"value", "std_error", "reps", "ci95", "method"}
