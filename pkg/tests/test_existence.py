import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from lmss.existence import (
    condition_C_check,
    example_hurst,
    infimum_sum_inv_h,
    sum_inv_h,
)
from lmss.hurst import HurstSpec, Rect
from oracles import c2_integral_sqrt_example


def test_infimum_constant():
    res = infimum_sum_inv_h(HurstSpec.constant([0.5, 0.5]), Rect((0.0, 0.0), (1.0, 1.0)))
    assert res.value == pytest.approx(4.0, abs=1e-12)


def test_infimum_example_at_left_end():
    spec, rect = example_hurst(2, 0.0, 0.5)
    res = infimum_sum_inv_h(spec, rect)
    assert res.value == pytest.approx(2.0, abs=1e-12)
    assert res.argmin[0] == pytest.approx(0.0, abs=1e-9)


def test_infimum_affine_at_right_end():
    spec = HurstSpec.affine([0.4], [[0.1]], [0.4], [0.5])
    res = infimum_sum_inv_h(spec, Rect((0.0,), (1.0,)))
    assert res.value == pytest.approx(2.0, abs=1e-12)
    assert res.argmin[0] == pytest.approx(1.0, abs=1e-9)


def test_infimum_is_below_grid_minimum():
    spec = HurstSpec.affine([0.5, 0.6], [[0.2, -0.1], [0.1, 0.1]], [0.3, 0.4], [0.8, 0.8])
    rect = Rect((0.0, 0.0), (1.0, 1.0))
    res = infimum_sum_inv_h(spec, rect, grid_density=11)
    assert res.value <= sum_inv_h(spec, rect.lattice(11)).min() + 1e-15


@pytest.mark.parametrize("k,d,verdict", [
    (0.5, 2, "C2"),
    (0.5, 1, "C1"),
    (1.0, 2, "fail"),
    (1.0, 1, "C1"),
])
def test_example_classification(k, d, verdict):
    spec, rect = example_hurst(2, 0.0, k)
    rep = condition_C_check(spec, rect, d)
    assert rep.verdict == verdict
    assert rep.exists == (verdict != "fail")


def test_c2_integral_matches_closed_form():
    spec, rect = example_hurst(2, 0.0, 0.5)
    rep = condition_C_check(spec, rect, 2)
    assert rep.c2_integral == pytest.approx(c2_integral_sqrt_example(rect.upper[0]), rel=1e-6)
    assert rep.diagnostics["status"] == "converged"


def test_divergent_case_reports_sequence():
    spec, rect = example_hurst(2, 0.0, 1.0)
    rep = condition_C_check(spec, rect, 2)
    seq = rep.diagnostics["capped_sequence"]
    assert rep.diagnostics["status"] == "divergent"
    assert math.isinf(rep.c2_integral)
    assert np.all(np.diff(seq) > 0)


def test_c1_skips_integral():
    rep = condition_C_check(HurstSpec.constant([0.5, 0.5]), Rect((0.0, 0.0), (1.0, 1.0)), 3)
    assert rep.verdict == "C1" and rep.c2_integral is None


def test_d_above_infimum_fails():
    rep = condition_C_check(HurstSpec.constant([0.5]), Rect((0.0,), (1.0,)), 3)
    assert rep.verdict == "fail"


@pytest.mark.parametrize("h", [[0.5], [0.5, 0.5], [0.25, 0.5], [1 / 3, 1 / 3, 1 / 3]])
def test_constant_spec_never_c2(h):
    d = int(round(sum(1.0 / x for x in h)))
    rect = Rect((0.0,) * len(h), (1.0,) * len(h))
    rep = condition_C_check(HurstSpec.constant(h), rect, d)
    assert rep.verdict == "fail"
    assert math.isinf(rep.c2_integral)


@given(st.lists(st.sampled_from([0.25, 0.5, 1 / 3, 0.2]), min_size=1, max_size=3))
def test_constant_tie_property(h):
    d = int(round(sum(1.0 / x for x in h)))
    rect = Rect((0.0,) * len(h), (1.0,) * len(h))
    assert condition_C_check(HurstSpec.constant(h), rect, d, grid_density=5).verdict == "fail"


@given(st.floats(0.3, 0.75), st.floats(0.01, 0.2), st.booleans())
def test_monotone_in_d(intercept, slope, decreasing):
    slope = -slope if decreasing else slope
    lo, hi = sorted((intercept, intercept + slope))
    spec = HurstSpec.affine([intercept], [[slope]], [lo], [hi])
    rect = Rect((0.0,), (1.0,))
    verdicts = [condition_C_check(spec, rect, d, grid_density=21).verdict for d in range(1, 5)]
    for i, v in enumerate(verdicts):
        if v == "C1":
            assert all(w == "C1" for w in verdicts[:i])


def test_d_must_be_positive_integer():
    spec, rect = example_hurst(2, 0.0, 0.5)
    for d in (0, 1.5):
        with pytest.raises(ValueError):
            condition_C_check(spec, rect, d)


def test_example_values():
    spec, rect = example_hurst(2, 0.0, 0.5, upper=0.2)
    assert rect.upper == (0.2,)
    np.testing.assert_allclose(spec([[0.0], [0.2]])[:, 0], [0.5, 0.5 - math.sqrt(0.2)],
                               rtol=1e-12)
    assert spec([[0.2]])[0, 0] == pytest.approx(0.0528, abs=1e-4)


def test_example_default_domain_keeps_h_positive():
    spec, rect = example_hurst(2, 0.0, 0.5)
    assert spec([[rect.upper[0]]])[0, 0] == pytest.approx(0.05, abs=1e-12)


def test_linear_example():
    spec, rect = example_hurst(2, 0.0, 1.0, upper=0.49)
    v = np.linspace(0.0, 0.49, 7)[:, None]
    np.testing.assert_allclose(spec(v)[:, 0], 0.5 - v[:, 0], atol=1e-14)


@pytest.mark.parametrize("args", [(1, 0.0, 0.5), (2, 0.0, 0.0), (2, 0.6, 1.0),
                                  (2, 0.0, 1.0, 0.5), (2.5, 0.0, 1.0)])
def test_example_rejects_bad_parameters(args):
    with pytest.raises(ValueError):
        example_hurst(*args)
