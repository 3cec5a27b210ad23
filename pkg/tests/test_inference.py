import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.stats import norm, truncnorm

import shimsi.inference as inf
from shimsi.errors import ConsistencyError, InputError, NumericalDegeneracyError
from shimsi.lasso_path import ActiveModel, lambda_max
from shimsi.patterns import Dataset
from shimsi.tau_path import fit_at, tau_path

from conftest import random_dataset

HALF_LINE = inf.TruncationRegion(((0.0, math.inf),))


def _target(stat, sigma_eta=1.0):
    return inf.TestTarget(0, np.array([1.0]), sigma_eta ** 2, stat)


class _Path:
    def __init__(self, segs):
        self._segs = segs
        self.tau_min, self.tau_max = segs[0][0], segs[-1][1]

    def segments(self):
        return iter(self._segs)


class TestDirection:
    def test_unit_column(self):
        x = np.array([1.0, 0.0, 0.0])
        y = np.array([2.0, 5.0, -1.0])
        t = inf.test_direction(0, x, 1.0, y)
        np.testing.assert_allclose(t.eta, x)
        assert t.stat_obs == pytest.approx(x @ y) and t.sigma_eta2 == pytest.approx(1.0)

    def test_orthonormal(self):
        X = np.eye(4)[:, :2]
        np.testing.assert_allclose(inf.test_direction(1, X).eta, X[:, 1])

    def test_least_squares_coefficient(self, rng):
        X = rng.random((20, 3))
        y = rng.standard_normal(20)
        coef, *_ = np.linalg.lstsq(X, y, rcond=None)
        for j in range(3):
            assert inf.test_direction(j, X, 1.0, y).stat_obs == pytest.approx(coef[j], rel=1e-10)

    def test_bad_index(self):
        with pytest.raises(InputError):
            inf.test_direction(2, np.eye(3)[:, :2])


class TestNuisance:
    def test_example(self):
        pair = inf.nuisance_decomposition(np.array([2.0, 3.0]), np.array([1.0, 0.0]))
        np.testing.assert_allclose(pair.b, [1.0, 0.0])
        np.testing.assert_allclose(pair.q, [0.0, 3.0])

    def test_reconstruction_and_scale(self, rng):
        y, eta = rng.standard_normal((2, 10))
        p1 = inf.nuisance_decomposition(y, eta, 1.0)
        p2 = inf.nuisance_decomposition(y, eta, 2.0)
        np.testing.assert_allclose(p1.q + p1.b * (eta @ y), y)
        np.testing.assert_array_equal(p1.b, p2.b)

    def test_zero_eta(self):
        with pytest.raises(InputError):
            inf.nuisance_decomposition(np.ones(3), np.zeros(3))


class TestRegion:
    def test_example(self):
        A, B = ((1,),), ((1,), (2,))
        path = _Path([(-10.0, 0.0, A), (0.0, 1.0, B), (1.0, 3.0, A), (3.0, 5.0, B)])
        assert inf.truncation_region(path, B).intervals == ((0.0, 1.0), (3.0, 5.0))

    def test_adjacent_segments_merge_regardless_of_signs(self):
        B = ((1,), (2,))
        path = _Path([(0.0, 1.0, B), (1.0, 2.0, ((2,), (1,)))])
        assert inf.truncation_region(path, B).intervals == ((0.0, 2.0),)

    def test_missing_active_set(self):
        with pytest.raises(ConsistencyError):
            inf.truncation_region(_Path([(0.0, 1.0, ((1,),))]), ((2,),))

    def test_stat_outside(self):
        with pytest.raises(ConsistencyError):
            inf.truncation_region(_Path([(0.0, 1.0, ((1,),))]), ((1,),), stat_obs=3.0)

    def test_validation(self):
        with pytest.raises(InputError):
            inf.TruncationRegion(((1.0, 0.0),))
        with pytest.raises(InputError):
            inf.TruncationRegion(((0.0, 2.0), (1.0, 3.0)))
        with pytest.raises(InputError):
            inf.TruncationRegion(())

    def test_zero_b_region_is_full_range(self):
        data = random_dataset(0, n=30, m=5)
        lam = 0.3 * lambda_max(data, max_order=2)[0]
        q = data.y
        path = tau_path(data, lam, np.zeros(data.n), q, -4.0, 4.0, max_order=2)
        A = fit_at(data, q, lam, max_order=2).patterns
        assert inf.truncation_region(path, A).intervals == ((-4.0, 4.0),)

    def test_grid_resolve(self):
        data = random_dataset(3, n=50, m=8, zeta=0.5)
        lam = 0.25 * lambda_max(data, max_order=3)[0]
        model = fit_at(data, data.y, lam, max_order=3)
        t = inf.test_direction(0, model.columns, 1.0, data.y)
        pair = inf.nuisance_decomposition(data.y, t.eta)
        lo, hi = t.stat_obs - 5 * t.sigma_eta, t.stat_obs + 5 * t.sigma_eta
        path = tau_path(data, lam, pair.b, pair.q, lo, hi, max_order=3)
        region = inf.truncation_region(path, model.patterns, t.stat_obs)
        assert region.contains(t.stat_obs)
        edges = np.array([e for iv in region.intervals for e in iv])
        target = set(model.patterns)
        for tau in np.linspace(lo, hi, 100):
            if np.min(np.abs(edges - tau)) < 1e-7:
                continue
            act = set(fit_at(data, pair.q + pair.b * tau, lam, max_order=3).patterns)
            assert (act == target) == region.contains(tau)


class TestTruncatedNormal:
    def test_real_line(self):
        for x in (-2.0, 0.3, 1.7):
            assert inf.truncated_normal_cdf(x, 0, 1, inf.TruncationRegion.real_line()) == \
                pytest.approx(norm.cdf(x), rel=1e-12)

    def test_half_line(self):
        assert inf.truncated_normal_cdf(1.0, 0, 1, HALF_LINE) == pytest.approx(0.682689, abs=1e-6)

    def test_outside_region(self):
        r = inf.TruncationRegion(((0.0, 1.0),))
        assert inf.truncated_normal_cdf(-1.0, 0, 1, r) == 0.0
        assert inf.truncated_normal_cdf(2.0, 0, 1, r) == 1.0
        assert inf.truncated_normal_sf(2.0, 0, 1, r) == 0.0

    def test_far_tail_stable(self):
        r = inf.TruncationRegion(((40.0, 41.0), (50.0, math.inf)))
        c = inf.truncated_normal_cdf(40.5, 0, 1, r)
        assert 0.0 < c < 1.0 and math.isfinite(c)

    def test_mass_underflow_raises(self):
        r = inf.TruncationRegion(((1e200, math.inf),))
        with pytest.raises(NumericalDegeneracyError):
            inf.truncated_normal_cdf(2e200, 0, 1, r)

    def test_sub_ulp_interval_keeps_mass(self):
        r = inf.TruncationRegion(((40.0, float(np.nextafter(40.0, 41.0))),))
        assert inf.truncated_normal_sf(40.0, 0, 1, r) == 1.0

    def test_bad_variance(self):
        with pytest.raises(InputError):
            inf.truncated_normal_cdf(0.0, 0, 0.0, HALF_LINE)


class TestPValue:
    def test_untruncated(self):
        p = inf.selective_p_value(_target(1.959963984540054 * 2.0, 2.0),
                                  inf.TruncationRegion.real_line())
        assert p == pytest.approx(0.05, rel=1e-9)

    def test_half_line(self):
        assert inf.selective_p_value(_target(1.0), HALF_LINE) == pytest.approx(0.6346, abs=1e-4)

    def test_symmetric_zero(self):
        r = inf.TruncationRegion(((-3.0, -1.0), (-0.5, 0.5), (1.0, 3.0)))
        assert inf.selective_p_value(_target(0.0), r) == pytest.approx(1.0)

    @settings(max_examples=50, deadline=None)
    @given(stat=st.floats(-8, 8), lo=st.floats(-10, 0), width=st.floats(0.1, 10))
    def test_in_unit_interval(self, stat, lo, width):
        r = inf.TruncationRegion(((lo, lo + width),))
        stat = min(max(stat, lo), lo + width)
        p = inf.selective_p_value(_target(stat), r)
        assert 0.0 <= p <= 1.0


class TestCI:
    def test_untruncated_z_interval(self):
        lo, hi = inf.selective_ci(_target(0.7, 1.5), inf.TruncationRegion.real_line())
        assert lo == pytest.approx(0.7 - 1.959963984540054 * 1.5, rel=1e-9)
        assert hi == pytest.approx(0.7 + 1.959963984540054 * 1.5, rel=1e-9)

    def test_monotone_in_alpha(self):
        r = inf.TruncationRegion(((-1.0, 0.5), (2.0, 6.0)))
        prev = None
        for a in (0.3, 0.1, 0.05, 0.01):
            lo, hi = inf.selective_ci(_target(2.5), r, a)
            if prev:
                assert lo < prev[0] and hi > prev[1]
            prev = (lo, hi)

    def test_fine_grid_inversion(self):
        # independent oracle: scipy truncnorm on a dense mean grid
        mus = np.linspace(-8.0, 5.0, 130001)
        cdf = truncnorm.cdf(1.0, -mus, np.inf, loc=mus)
        lo_ref = np.interp(0.025, 1 - cdf, mus)
        hi_ref = np.interp(-0.025, -cdf, mus)
        lo, hi = inf.selective_ci(_target(1.0), HALF_LINE)
        assert lo == pytest.approx(lo_ref, abs=1e-3)
        assert hi == pytest.approx(hi_ref, abs=1e-3)

    def test_bad_alpha(self):
        with pytest.raises(InputError):
            inf.selective_ci(_target(0.0), HALF_LINE, 1.5)


def test_ci_p_duality():
    rng = np.random.default_rng(2024)
    agree = total = 0
    for _ in range(300):
        cuts = np.sort(rng.uniform(-4, 4, 4))
        r = inf.TruncationRegion(((cuts[0], cuts[1]), (cuts[2], cuts[3])))
        iv = r.intervals[rng.integers(2)]
        stat = rng.uniform(*iv)
        t = _target(stat, rng.uniform(0.5, 2.0))
        p = inf.selective_p_value(t, r)
        lo, hi = inf._ci_with_fallback(t, r, 0.05, {})
        total += 1
        if (p < 0.05) == (not lo <= 0.0 <= hi):
            agree += 1
        else:
            assert abs(p - 0.05) < 1e-6
    assert agree >= 0.99 * total


def test_sigma_scale_contract():
    data = random_dataset(6, n=50, m=6, zeta=0.5)
    lam = 0.3 * lambda_max(data, max_order=2)[0]
    model = fit_at(data, data.y, lam, max_order=2)
    r1 = inf.infer_all(data, lam, model, max_order=2, sigma2=1.0)
    r4 = inf.infer_all(data, lam, model, max_order=2, sigma2=4.0)
    for a, b in zip(r1, r4):
        assert b.sigma_eta == pytest.approx(2 * a.sigma_eta)
        # tau range scales with sigma_eta, so compare where both regions reach
        inner = [(max(lo, a.stat - 20 * a.sigma_eta), min(hi, a.stat + 20 * a.sigma_eta))
                 for lo, hi in b.region.intervals]
        inner = [(lo, hi) for lo, hi in inner if hi > lo]
        assert np.allclose(inner, a.region.intervals, rtol=1e-9, atol=1e-9)
        t = inf.TestTarget(0, np.zeros(1), b.sigma_eta ** 2, b.stat)
        assert b.p_selective == pytest.approx(inf.selective_p_value(t, b.region), rel=1e-12)


def test_infer_all_single_pattern():
    data = random_dataset(1, n=40, m=5, zeta=0.5)
    lam0, _, _ = lambda_max(data, max_order=2)
    model = fit_at(data, data.y, 0.999 * lam0, max_order=2)
    assert len(model) == 1
    res = inf.infer_all(data, 0.999 * lam0, model, max_order=2)
    assert len(res) == 1
    r = res[0]
    assert r.region.contains(r.stat) and 0.0 <= r.p_selective <= 1.0
    # near a region edge the interval need not cover the statistic
    assert r.ci[0] < r.ci[1]


def test_infer_all_rejects_method():
    data = random_dataset(1, n=20, m=3)
    with pytest.raises(InputError):
        inf.infer_all(data, 1.0, ActiveModel.empty(20, 1.0), method="xyz", max_order=1)


def test_estimate_sigma2():
    rng = np.random.default_rng(0)
    Z = (rng.random((2000, 2)) > 0.5).astype(float)
    y = 2 * Z[:, 0] + 1.5 * rng.standard_normal(2000)
    data = Dataset(Z, y)
    model = fit_at(data, y, 1.0, max_order=1)
    assert inf.estimate_sigma2(data, model) == pytest.approx(2.25, rel=0.1)
