import json
import math

import numpy as np
import pytest

from sreplab.laws import THREE_POINT_NOISE, NoiseLaw, build_kevei_law, garch_critical, garch_to_sre
from sreplab.limitlab import (
    IIDSource,
    SRESource,
    Verdict,
    clt_experiment,
    covariance_decay_probe,
    fclt_experiment,
    gof_normal,
    trend_confidence,
    truncated_moment_experiment,
    wlln_experiment,
)
from sreplab.rng import make_stream
from sreplab.slowvary import PositiveLawY

THREE_POINT = garch_critical(1.0, 1.0, THREE_POINT_NOISE)


def exact_three_point(t):
    m = math.floor(math.log2(t + 1))
    return m - 1 + 2.0**-m


def test_gof_normal():
    x = make_stream(1).normals(20_000) * 2.0
    ks, sr = gof_normal(x, 4.0)
    assert ks < 0.02 and sr == pytest.approx(1.0, abs=0.03)
    with pytest.raises(ValueError):
        gof_normal(x[:10], 1.0)
    with pytest.raises(ValueError):
        gof_normal(x, 0.0)


def test_trend_confidence_extremes():
    rng = np.random.default_rng(0)
    first = np.full(50, 2.0)
    last = np.full(50, 1.0)
    err = lambda v: abs(float(np.median(v)) - 1.0)
    assert trend_confidence(first, last, err, rng, 100) == 1.0
    assert trend_confidence(last, first, err, rng, 100) == 0.0


def test_verdict_is_plain_bool():
    v = Verdict("x", "rule", 1, np.float64(0.5), np.bool_(True))
    assert v.passed is True and v.as_dict()["passed"] is True


def test_truncated_moments_direct_and_tilted_agree_with_exact():
    grid = [2.0**5, 2.0**10, 2.0**20]
    for method in ("direct", "tilted"):
        rep = truncated_moment_experiment(THREE_POINT, 1.0, grid, 100_000, make_stream(2), method=method,
                                          exact=exact_three_point, ratio_band=(0.5, 1.5), z_max=4.0)
        assert rep.verdict("no_flags").passed
        assert rep.verdict("exact_within_se").passed, rep.levels
        assert rep.extras["D"]["value"] == 1.0
    assert rep.verdict("trend").passed


def test_truncated_moment_grid_checks():
    with pytest.raises(ValueError, match="four decades"):
        truncated_moment_experiment(THREE_POINT, 1.0, [10.0, 100.0], 100, make_stream(1))
    with pytest.raises(ValueError):
        truncated_moment_experiment(THREE_POINT, 1.0, [1.0, 1e6], 100, make_stream(1))
    with pytest.raises(ValueError):
        truncated_moment_experiment(THREE_POINT, 1.0, [10.0, 1e6], 100, make_stream(1), method="magic")


def test_kevei_truncated_moment_small():
    law = build_kevei_law(0.5, 1.0, 0.05, 0.3, 1.0)
    rep = truncated_moment_experiment(law, 1.0, list(np.exp(np.linspace(5, 30, 6))), 50_000, make_stream(3),
                                      method="tilted", trend=False, slope_target=0.5, slope_tol=0.2)
    assert rep.extras["profile"]["branch"] == "regvar"
    assert rep.verdict("no_flags").passed
    assert 0.7 < rep.levels[-1]["ratio"] < 1.3


def test_digest_is_reproducible_and_seed_sensitive():
    grid = [2.0**5, 2.0**20]
    a = truncated_moment_experiment(THREE_POINT, 1.0, grid, 5000, make_stream(4))
    b = truncated_moment_experiment(THREE_POINT, 1.0, grid, 5000, make_stream(4))
    c = truncated_moment_experiment(THREE_POINT, 1.0, grid, 5000, make_stream(5))
    assert a.digest == b.digest != c.digest
    assert len(a.digest) == 16
    json.dumps(a.to_dict(), allow_nan=True)
    assert a.manifest["digest"] == a.digest


def test_wlln_degenerate_and_stpetersburg():
    rep = wlln_experiment(IIDSource(PositiveLawY.bounded(2.0)), [16, 64], 20, make_stream(6), boot=50)
    assert all(r["median"] == pytest.approx(1.0) for r in rep.levels)
    rep = wlln_experiment(IIDSource(PositiveLawY.st_petersburg()), [2**8, 2**12], 50, make_stream(7),
                          truncation_check=True, boot=100)
    assert {"clip_level", "median_truncated", "truncation_shift"} <= set(rep.levels[-1])
    assert rep.extras["a_n_exponent"] == 0.5
    with pytest.raises(ValueError):
        wlln_experiment(IIDSource(PositiveLawY.st_petersburg(), "other"), [16], 5, make_stream(7))
    with pytest.raises(TypeError):
        wlln_experiment("nope", [16], 5, make_stream(7))


def test_wlln_sre_source():
    rep = wlln_experiment(SRESource(THREE_POINT), [2**8, 2**12], 100, make_stream(8), boot=100)
    assert rep.extras["target"] == 1.0
    assert rep.levels[-1]["normalizer"] == pytest.approx(2**12 * 12)
    assert rep.verdict("no_flags").passed


def test_clt_regimes():
    sub = clt_experiment(1.0, 0.25, 0.25, NoiseLaw.standard_normal(), [2000], 300, make_stream(9))
    assert sub.extras["regime"] == "subcritical" and sub.extras["target_variance"] == 2.0
    assert abs(sub.levels[0]["var_ratio"] - 1) < 0.3
    crit = clt_experiment(1.0, 1.0, 0.0, THREE_POINT_NOISE, [256, 4096], 200, make_stream(9), lindeberg=True)
    assert crit.extras["regime"] == "critical_finite"
    assert crit.extras["C_lambda_Z"] == pytest.approx(1 / math.log(2))
    assert "lindeberg_median" in crit.extras
    with pytest.raises(ValueError):
        clt_experiment(1.0, 0.7, 0.5, NoiseLaw.standard_normal(), [100], 10, make_stream(9))


def test_fclt_small():
    rep = fclt_experiment(1.0, 1.0, 0.0, THREE_POINT_NOISE, 4096, [0.25, 0.5, 1.0], 300, make_stream(10))
    assert abs(rep.verdict("sqrt_t_scaling").value / 2 - 1) < 0.3
    assert abs(rep.verdict("increment_independence").value) < 0.2
    with pytest.raises(ValueError):
        fclt_experiment(1.0, 0.25, 0.25, NoiseLaw.standard_normal(), 100, [1.0], 10, make_stream(10))


def test_covariance_probe():
    law = garch_to_sre(1.0, 0.5, 0.3, NoiseLaw.standard_normal())
    rep = covariance_decay_probe(law, 1.0, 5.0, 6, 20_000, make_stream(11), h2=10.0, eta_max=1.0)
    assert rep.levels[0]["cov"] > 0
    assert rep.verdict("no_flags").passed
    iid = covariance_decay_probe(PositiveLawY.pareto_one(), 1.0, 50.0, 5, 20_000, make_stream(12))
    assert iid.verdict("uncorrelated").passed
    with pytest.raises(ValueError):
        covariance_decay_probe(law, 1.0, 0.5, 3, 10, make_stream(12))
