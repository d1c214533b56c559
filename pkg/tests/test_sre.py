import math

import numba
import numpy as np
import pytest
from scipy import stats

from sreplab.laws import THREE_POINT_NOISE, DiscreteLaw, NoiseLaw, garch_critical, garch_to_sre
from sreplab.rng import make_stream
from sreplab.sre import (
    PathConfig,
    chi_h,
    forward_path,
    forward_paths,
    garch_path,
    garch_paths,
    perpetuity_sample,
    perpetuity_samples,
    write_path_csv,
)

HALF = DiscreteLaw((((0.5, 1.0), 1.0),))
THREE_POINT = garch_critical(1.0, 1.0, THREE_POINT_NOISE)


def test_deterministic_perpetuities():
    s = make_stream(1)
    assert perpetuity_sample(s, HALF) == pytest.approx(2.0, abs=1e-11)
    assert perpetuity_sample(s, DiscreteLaw((((0.0, 3.0), 1.0),))) == 3.0
    value, depth, stop, resid = perpetuity_sample(s, HALF, tol=1e-6, diagnostics=True)
    assert stop == "product_below_tol" and depth == 20 and resid == 2.0**-20
    assert value == pytest.approx(2.0 - 2.0**-19, abs=1e-15)


def test_depth_limit_is_reported():
    law = DiscreteLaw((((0.999, 1.0), 1.0),))
    _, depth, stop, _ = perpetuity_sample(make_stream(1), law, max_depth=100, diagnostics=True)
    assert (depth, stop) == (100, "max_depth")
    pb = perpetuity_samples(make_stream(1), law, 5, max_depth=100)
    assert pb.flagged == 5 and pb.stop_counts()["max_depth"] == 5


def test_three_point_perpetuity_values_are_mersenne():
    pb = perpetuity_samples(make_stream(2), THREE_POINT, 50_000)
    assert pb.flagged == 0
    m = np.log2(pb.values + 1.0)
    assert np.allclose(m, np.round(m), atol=1e-9)
    # P(U = 2^m - 1) = 2^-m
    counts = np.bincount(np.round(m).astype(int))[1:6]
    assert stats.chisquare(counts, 50_000 * 2.0 ** -np.arange(1, 6) * counts.sum() / (50_000 * (1 - 2**-5))).pvalue > 1e-3


def test_batch_offsets_are_consistent():
    s = make_stream(3)
    full = perpetuity_samples(s, THREE_POINT, 8)
    tail = perpetuity_samples(s, THREE_POINT, 3, start=5)
    assert np.array_equal(full.values[5:], tail.values)


def test_single_path_equals_first_batch_row():
    s = make_stream(4)
    law = garch_to_sre(1.0, 0.3, 0.5, NoiseLaw.standard_normal())
    cfg = PathConfig(200, "stationary")
    assert forward_path(s, law, cfg, 1.0).sum_u_kappa == forward_paths(s, law, cfg, 1.0, 3).sums[0, -1]
    gp = garch_path(s, 1.0, 0.3, 0.5, NoiseLaw.standard_normal(), cfg)
    gb = garch_paths(s, 1.0, 0.3, 0.5, NoiseLaw.standard_normal(), cfg, 3)
    assert gp.sum_x == gb.sum_x[0, -1] and gp.sum_sigma2 == gb.sum_sigma2[0, -1]
    assert gp.truncation_diagnostics["stop"] in ("product_below_tol", "product_zero")


def test_hand_iteration():
    ps = forward_path(make_stream(5), HALF, PathConfig(3, "zero"), 1.0)
    # U = 1, 1.5, 1.75
    assert ps.sum_u_kappa == 4.25
    ps = forward_path(make_stream(5), HALF, PathConfig(3, "fixed", 4.0, record="full"), 2.0)
    assert np.allclose(ps.path, [4.0, 3.0, 2.5, 2.25])
    assert ps.sum_u_kappa == pytest.approx(9 + 6.25 + 2.25**2)


def test_garch_sigma2_recursion():
    cfg = PathConfig(20, "fixed", 3.0, record="full")
    gp = garch_path(make_stream(6), 1.0, 0.0, 0.5, NoiseLaw.standard_normal(), cfg)
    assert np.allclose(gp.sigma2, 2.0 + 0.5 ** np.arange(21), rtol=0, atol=1e-14)
    assert gp.path.size == 20


def test_garch_path_matches_its_sigma2():
    cfg = PathConfig(300, "stationary", record="full")
    gp = garch_path(make_stream(7), 1.0, 1.0, 0.0, THREE_POINT_NOISE, cfg)
    # X_j = sigma_j Z_j with path[j - 1] = X_j and sigma2[j] = sigma_j^2
    z = gp.path / np.sqrt(gp.sigma2[1:])
    assert np.allclose(np.abs(z)[np.abs(z) > 0], math.sqrt(2.0))
    # sigma2_j = 1 + X_{j-1}^2
    assert np.allclose(gp.sigma2[2:], 1.0 + gp.path[:-1] ** 2)
    assert gp.sum_x == pytest.approx(gp.path.sum())


def test_grid_snapshots_match_partial_sums():
    cfg = PathConfig(1000, "stationary", record="grid", times=(0.25, 0.5, 1.0))
    assert list(cfg.snapshot_steps()) == [250, 500, 1000]
    gb = garch_paths(make_stream(8), 1.0, 1.0, 0.0, THREE_POINT_NOISE, cfg, 4)
    full = garch_path(make_stream(8), 1.0, 1.0, 0.0, THREE_POINT_NOISE, PathConfig(1000, record="full"))
    assert gb.sum_x[0] == pytest.approx(np.cumsum(full.path)[[249, 499, 999]])


def test_path_config_validation():
    with pytest.raises(ValueError):
        PathConfig(0)
    with pytest.raises(ValueError):
        PathConfig(10, "random")
    with pytest.raises(ValueError):
        PathConfig(10, record="grid")
    with pytest.raises(ValueError):
        PathConfig(10, record="grid", times=(0.5, 0.25))
    with pytest.raises(ValueError):
        PathConfig(3, record="grid", times=(0.1, 0.2)).snapshot_steps()


def test_results_do_not_depend_on_thread_count():
    law = garch_to_sre(1.0, 0.4, 0.5, NoiseLaw.standard_normal())
    cfg = PathConfig(500, "stationary", record="grid", times=(0.5, 1.0))
    prev = numba.get_num_threads()
    try:
        numba.set_num_threads(1)
        a = forward_paths(make_stream(9), law, cfg, 1.3, 64).sums
        numba.set_num_threads(min(4, numba.config.NUMBA_NUM_THREADS))
        b = forward_paths(make_stream(9), law, cfg, 1.3, 64).sums
    finally:
        numba.set_num_threads(prev)
    assert np.array_equal(a, b)


def test_chi_h():
    assert chi_h(5.0, 2.0) == 2.0 and chi_h(-5.0, 2.0) == -2.0 and chi_h(1.5, 2.0) == 1.5
    assert np.array_equal(chi_h(np.array([-3.0, 0.0, 3.0]), 1.0), [-1.0, 0.0, 1.0])
    with pytest.raises(ValueError):
        chi_h(1.0, 0.0)


def test_write_path_csv(tmp_path):
    ps = forward_path(make_stream(10), HALF, PathConfig(3, "zero", record="full"), 1.0)
    f = tmp_path / "p.csv"
    write_path_csv(f, ps)
    assert f.read_text().splitlines() == ["j,U_j", "0,0.0", "1,1.0", "2,1.5", "3,1.75"]
    gp = garch_path(make_stream(10), 1.0, 1.0, 0.0, THREE_POINT_NOISE, PathConfig(5, record="full"))
    write_path_csv(f, gp)
    assert f.read_text().splitlines()[0] == "j,X_j,sigma2_j"
    with pytest.raises(ValueError):
        write_path_csv(f, forward_path(make_stream(10), HALF, PathConfig(3), 1.0))
