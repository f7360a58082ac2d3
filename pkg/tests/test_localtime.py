import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import stats

from lmss.field import FieldSample, simulate
from lmss.hurst import HurstSpec, Rect
from lmss.localtime import (
    ProbeConfig,
    ScalingReport,
    box_local_time,
    holder_scaling_probe,
    local_time_estimate,
    moment_scaling_probe,
    occupation_histogram,
    phi_t,
    scott_bandwidth,
    smoothed_local_time,
    time_weights,
)
from oracles import brownian_mean_local_time

BROWNIAN = HurstSpec.constant([0.5])
UNIT = Rect((0.0,), (1.0,))


def constant_field(value, N=1, density=11, lower=0.0, upper=1.0):
    rect = Rect((lower,) * N, (upper,) * N)
    pts = rect.lattice(density)
    vals = np.tile(np.atleast_1d(np.asarray(value, float)), (pts.shape[0], 1))
    return FieldSample(pts, vals, (density,) * N), rect


# -- time weights ----------------------------------------------------------------


@pytest.mark.parametrize("N", [1, 2, 3])
def test_time_weights_sum_to_volume(N):
    rect = Rect((0.0,) * N, (2.0,) * N)
    pts = rect.lattice(9)
    assert time_weights(pts, rect).sum() == pytest.approx(2.0 ** N, rel=1e-12)


def test_time_weights_zero_outside():
    pts = UNIT.lattice(11)
    w = time_weights(pts, Rect((0.2,), (0.6,)))
    assert w.sum() == pytest.approx(0.4, rel=1e-12)
    assert np.all(w[(pts[:, 0] < 0.19) | (pts[:, 0] > 0.61)] == 0)


# -- histogram -------------------------------------------------------------------


def test_constant_zero_field_histogram():
    fs, rect = constant_field(0.0, N=2, upper=0.5)
    hist = occupation_histogram(fs, rect, 5, 0.1)
    centre = hist.density[2]
    assert centre == pytest.approx(rect.volume / 0.1, rel=1e-12)
    assert np.count_nonzero(hist.density) == 1
    assert local_time_estimate(hist, [0.0]) == pytest.approx(rect.volume / 0.1)
    assert local_time_estimate(hist, [0.2]) == 0.0


def test_out_of_range_x_raises():
    fs, rect = constant_field(0.0)
    hist = occupation_histogram(fs, rect, 5, 0.1)
    with pytest.raises(ValueError):
        local_time_estimate(hist, [1.0])


def test_bandwidth_must_be_positive():
    fs, rect = constant_field(0.0)
    with pytest.raises(ValueError):
        occupation_histogram(fs, rect, 5, 0.0)


def test_overflow_is_flagged():
    fs, rect = constant_field(3.0)
    hist = occupation_histogram(fs, rect, 5, 0.1)
    assert hist.overflow_mass == pytest.approx(1.0)
    assert hist.overflow_flagged


@pytest.mark.parametrize("alpha,d", [(2.0, 1), (1.5, 2), (1.0, 1)])
def test_mass_conservation(alpha, d):
    fs = simulate(HurstSpec.constant([0.6]), UNIT, 65, alpha, d, 4)
    bw = scott_bandwidth(fs.values)
    hist = occupation_histogram(fs, UNIT, 4001 if d == 1 else 401, bw,
                                center=np.median(fs.values, axis=0))
    assert hist.total_mass + hist.overflow_mass == pytest.approx(UNIT.volume, rel=1e-6)
    if alpha == 2.0:
        assert hist.total_mass == pytest.approx(UNIT.volume, rel=1e-6)


def test_additivity_over_partition():
    fs = simulate(BROWNIAN, UNIT, 65, 2.0, 1, 12)
    edges = [np.linspace(-3, 3, 61)]
    whole = occupation_histogram(fs, UNIT, edges, 0.1)
    left = occupation_histogram(fs, Rect((0.0,), (0.5,)), edges, 0.1)
    right = occupation_histogram(fs, Rect((0.5,), (1.0,)), edges, 0.1)
    # the shared lattice point at 0.5 carries half a trapezoid weight on each side
    np.testing.assert_allclose(left.density + right.density, whole.density, atol=1e-12)
    for x in (-0.2, 0.0, 0.35):
        assert (local_time_estimate(left, [x]) + local_time_estimate(right, [x])
                == pytest.approx(local_time_estimate(whole, [x]), abs=1e-12))


@given(st.floats(0.05, 0.95))
def test_additivity_property(cut):
    fs = simulate(BROWNIAN, UNIT, 41, 2.0, 1, 3)
    cut = round(cut * 40) / 40
    if cut in (0.0, 1.0):
        return
    w = time_weights(fs.points, UNIT)
    wl = time_weights(fs.points, Rect((0.0,), (cut,)))
    wr = time_weights(fs.points, Rect((cut,), (1.0,)))
    np.testing.assert_allclose(wl + wr, w, atol=1e-15)


# -- Brownian oracle ------------------------------------------------------------


def _brownian_box_estimates(density, bandwidth, replicates, scale=1.0, seed=0):
    out = []
    for r in range(replicates):
        fs = simulate(BROWNIAN, UNIT, density, 2.0, 1, seed, replicate=r)
        w = time_weights(fs.points, UNIT)
        bw = scott_bandwidth(fs.values) if bandwidth is None else bandwidth
        out.append(box_local_time(fs.values * scale, w, [0.0], bw * scale))
    return np.array(out)


def test_brownian_mean_local_time():
    # Var X(t) = 2t under the CF convention, hence E L(0, [0, 1]) = 1/sqrt(pi)
    est = _brownian_box_estimates(513, None, 500)
    assert est.mean() == pytest.approx(brownian_mean_local_time(1.0), rel=0.1)


def test_standard_brownian_mean_local_time():
    # rescaling by 1/sqrt(2) gives standard Brownian motion
    est = _brownian_box_estimates(513, None, 500, scale=1 / math.sqrt(2))
    assert est.mean() == pytest.approx(math.sqrt(2 / math.pi), rel=0.1)


def test_box_estimator_expectation():
    # E of the fixed-bandwidth box estimator: sum_i w_i P(|N(0, 2 t_i)| <= bw / 2) / bw
    density, bw = 129, 0.2
    t = UNIT.lattice(density)[:, 0]
    w = time_weights(t[:, None], UNIT)
    with np.errstate(divide="ignore"):
        p = np.where(t > 0, 2 * stats.norm.cdf(0.5 * bw / np.sqrt(2 * np.maximum(t, 1e-300))) - 1,
                     1.0)
    expected = float(np.sum(w * p) / bw)
    est = _brownian_box_estimates(density, bw, 1000)
    assert abs(est.mean() - expected) <= 3 * est.std(ddof=1) / math.sqrt(est.size)


def test_estimator_consistency_trend():
    target = brownian_mean_local_time(1.0)
    errs = [abs(_brownian_box_estimates(dens, bw, 1000).mean() - target)
            for dens, bw in ((65, 0.4), (129, 0.2), (257, 0.1))]
    assert errs[0] > errs[1] > errs[2]


# -- smoothed estimator ----------------------------------------------------------


@pytest.mark.parametrize("d,k", [(1, 1.0), (1, 25.0), (2, 4.0)])
def test_smoothed_constant_field(d, k):
    x = np.full(d, 0.3)
    fs, rect = constant_field(x, N=1)
    expected = (2 * math.pi) ** -d * (2 * math.pi * k) ** (d / 2) * rect.volume
    assert smoothed_local_time(fs, rect, x, k) == pytest.approx(expected, rel=1e-12)


def test_smoothed_grows_like_sqrt_k():
    fs, rect = constant_field(0.0)
    ratio = smoothed_local_time(fs, rect, [0.0], 400.0) / smoothed_local_time(fs, rect, [0.0], 4.0)
    assert ratio == pytest.approx(10.0, rel=1e-12)


@pytest.mark.parametrize("k", [1.0, 10.0, 100.0, 1000.0])
def test_smoothed_gaussian_tail(k):
    delta0 = 0.5
    fs, rect = constant_field(0.0)
    bound = (2 * math.pi * k) ** 0.5 / (2 * math.pi) * math.exp(-k * delta0 ** 2 / 2) * rect.volume
    assert smoothed_local_time(fs, rect, [delta0], k) <= bound * (1 + 1e-12)


def test_smoothed_tail_vanishes():
    fs, rect = constant_field(0.0)
    vals = [smoothed_local_time(fs, rect, [0.5], k) for k in (100.0, 400.0, 1600.0)]
    assert vals[0] > vals[1] > vals[2] and vals[2] < 1e-40


def test_smoothed_rejects_nonpositive_k():
    fs, rect = constant_field(0.0)
    with pytest.raises(ValueError):
        smoothed_local_time(fs, rect, [0.0], 0.0)


def test_smoothed_matches_histogram_on_brownian():
    box, smooth = [], []
    for r in range(500):
        fs = simulate(BROWNIAN, UNIT, 513, 2.0, 1, 0, replicate=r)
        w = time_weights(fs.points, UNIT)
        bw = scott_bandwidth(fs.values)
        box.append(box_local_time(fs.values, w, [0.0], bw))
        # Gaussian with the box kernel's variance bw^2 / 12
        smooth.append(smoothed_local_time(fs, UNIT, [0.0], 12.0 / bw ** 2))
    assert np.mean(smooth) == pytest.approx(np.mean(box), rel=0.15)


# -- scaling probes --------------------------------------------------------------


def test_phi_t_value():
    r = math.exp(-math.e)
    assert phi_t(r, 0.5, 1) == pytest.approx(math.exp(-math.e / 2), rel=1e-14)
    assert phi_t(r, 0.5, 1) == pytest.approx(0.2567, abs=5e-4)


@pytest.mark.parametrize("r", [math.exp(-1), 0.5, 0.0, -0.1])
def test_phi_t_precondition(r):
    with pytest.raises(ValueError):
        phi_t(r, 0.5, 1)


def test_holder_probe_rejects_large_radii():
    with pytest.raises(ValueError):
        holder_scaling_probe(ProbeConfig(BROWNIAN, radii=(0.4, 0.2, 0.1, 0.05), t=(0.5,),
                                         eval_density=257, replicates=2))


def test_scaling_report_needs_four_scales():
    with pytest.raises(ValueError):
        ScalingReport(np.ones(3), np.ones(3), 0.0, 0.0, 0.0, True)


def test_zeroth_moment():
    rep = moment_scaling_probe(ProbeConfig(BROWNIAN, n=0))
    np.testing.assert_array_equal(rep.statistics, 1.0)
    assert rep.fitted_slope == 0.0 and rep.consistent


def test_moment_order_limit():
    with pytest.raises(ValueError):
        moment_scaling_probe(ProbeConfig(BROWNIAN, n=4))


@pytest.mark.parametrize("n,tol", [(1, 0.1), (2, 0.15)])
def test_brownian_moment_slope(n, tol):
    rep = moment_scaling_probe(ProbeConfig(BROWNIAN, n=n, seed=1))
    assert rep.theory_exponent == pytest.approx(0.5 * n)
    assert rep.fitted_slope == pytest.approx(0.5 * n, abs=tol)
    assert rep.consistent


def test_moment_probe_is_deterministic_across_threads():
    cfg = dict(spec=BROWNIAN, n=1, replicates=40, eval_density=33, seed=5)
    a = moment_scaling_probe(ProbeConfig(**cfg))
    b = moment_scaling_probe(ProbeConfig(**cfg, threads=4))
    assert a.statistics.tobytes() == b.statistics.tobytes()


def test_brownian_sheet_moment_slope():
    rep = moment_scaling_probe(ProbeConfig(HurstSpec.constant([0.5, 0.5]), n=1, a=(0.5, 0.5),
                                           eval_density=33, replicates=200, seed=1))
    assert rep.theory_exponent == pytest.approx(1.5)
    assert rep.fitted_slope >= 1.5 - 0.15
    assert rep.consistent


def test_brownian_holder_ratio_bounded():
    rep = holder_scaling_probe(ProbeConfig(BROWNIAN, eval_density=257, replicates=200, seed=2))
    assert rep.consistent
    assert np.isfinite(rep.meta["p95_max_ratio"])
    assert rep.theory_exponent == pytest.approx(0.5)
