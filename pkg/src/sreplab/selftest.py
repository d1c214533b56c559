"""Fast checks of elementary cases across all modules (run by ``sreplab selftest``)."""

from __future__ import annotations

import math

import numpy as np


def _checks():
    from . import analytics as A
    from . import laws as L
    from . import limitlab as X
    from . import slowvary as S
    from . import sre
    from .rng import make_stream

    s = make_stream(42)
    half = L.DiscreteLaw((((0.5, 1.0), 1.0),))
    zero = L.DiscreteLaw((((0.0, 3.0), 1.0),))
    two = L.DiscreteLaw((((2.0, 1.0), 1.0),))

    yield "rng: same seed, same uniforms", np.array_equal(make_stream(42).uniforms(100), s.uniforms(100))
    yield "rng: split is order independent", s.split(5).uniforms(10).tolist() == make_stream(42).split(5).uniforms(10).tolist()
    yield "rng: zero seed is valid", make_stream(0).uniforms(4).size == 4
    yield "rng: nested split differs", not np.array_equal(s.split(1).split(1).uniforms(8), s.split(1).uniforms(8))
    yield "laws: point-mass noise", np.all(L.sample_noise(s, L.NoiseLaw.discrete([(0.0, 1.0)], standardized=False), 100) == 0.0)
    g = L.garch_to_sre(1.0, 0.0, 0.5, L.NoiseLaw.standard_normal())
    a, b = L.sample_coeff(s, g, 100)
    yield "laws: lambda = 0 degenerates A", np.all(a == 0.5) and np.all(b == 1.0)
    yield "laws: beta = 0 fails P(B=0)<1", L.check_conditions(
        L.GarchLaw(0.0, 0.5, 0.5, L.NoiseLaw.standard_normal())).cond4 == "fail"
    yield "sre: geometric perpetuity", abs(sre.perpetuity_sample(s, half) - 2.0) < 1e-11
    yield "sre: A = 0 collapses to B", sre.perpetuity_sample(s, zero) == 3.0
    ps = sre.forward_path(s, half, sre.PathConfig(3, "zero"), 1.0)
    yield "sre: hand iteration", abs(ps.sum_u_kappa - 4.25) < 1e-15
    gp = sre.garch_path(s, 1.0, 0.0, 0.5, L.NoiseLaw.standard_normal(), sre.PathConfig(20, "fixed", 3.0, record="full"))
    yield "sre: affine sigma2 iteration", np.allclose(gp.sigma2, 2.0 + 0.5 ** np.arange(21), rtol=0, atol=1e-14)
    yield "sre: chi_h", (sre.chi_h(3, 2), sre.chi_h(-3, 2), sre.chi_h(1, 2)) == (2.0, -2.0, 1.0)
    yield "analytics: psi of point mass", abs(A.psi(two, 3).value - 8.0) < 1e-12
    yield "analytics: h_A vanishes for A <= 1", A.h_A(half, 1.0, 3.0) == 0.0
    prof = A.SlowVariationProfile.regvar(0.0, lambda x: 1.0)
    yield "analytics: g_A(e^2) = 2", abs(A.g_A(prof, math.e**2) - 2.0) < 1e-12
    yield "analytics: D = E B at kappa = 1", A.d_constant(half, 1.0, s, 10_000).value == 1.0
    yield "slowvary: bounded truncated mean", S.truncated_mean(S.PositiveLawY.bounded(5.0), 10.0) == 5.0
    yield "slowvary: bounded tail ratio", S.tail_ratio(S.PositiveLawY.bounded(5.0), 10.0) == 0.0
    yield "slowvary: b_n for constant l", abs(S.bruin_bn(S.ell_const(1.0), 1000) - 1000.0) < 1e-9
    yield "slowvary: constant l probes", S.probe_condition(S.ell_const(3.0), "2a", np.geomspace(10, 1e6, 10)).verdict == "converges_to_1"
    ks, sr = X.gof_normal(np.zeros(100), 1.0)
    yield "limitlab: degenerate sample scale", sr == 0.0
    rep = X.wlln_experiment(X.IIDSource(S.PositiveLawY.bounded(2.0)), [16, 64], 20, s, boot=50)
    yield "limitlab: degenerate LLN", all(abs(r["median"] - 1.0) < 1e-12 for r in rep.levels)


def run_selftest():
    out = []
    for name, ok in _checks():
        out.append((name, bool(ok), None if ok else "check failed"))
    return out
