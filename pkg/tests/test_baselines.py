import math

import numpy as np
import pytest

import shimsi.inference as inf
from shimsi.baselines import data_split_inference, polytope_interval, split_rows
from shimsi.errors import InputError
from shimsi.lasso_path import lambda_max, lambda_path
from shimsi.patterns import Dataset, branch_and_bound_max_abs
from shimsi.tau_path import fit_at

from conftest import random_dataset


def _fitted(seed, n=50, m=8, zeta=0.5, frac=0.3, d=3):
    data = random_dataset(seed, n=n, m=m, zeta=zeta)
    lam = frac * lambda_max(data, max_order=d)[0]
    return data, lam, fit_at(data, data.y, lam, max_order=d)


def _fixed_sign_kkt(data, lam, model, pair, tau, d):
    """Whether the fixed-sign solution stays optimal at ``tau``."""
    y = pair.q + pair.b * tau
    X, s = model.columns, model.signs
    beta = np.linalg.solve(X.T @ X, X.T @ y - lam * s)
    if np.any(np.sign(beta) != s):
        return False
    res = branch_and_bound_max_abs(data, d, y - X @ beta, exclude=model.patterns)
    return res.value <= lam * (1 + 1e-12)


def test_zero_b_gives_working_range():
    data, lam, model = _fitted(0)
    t = inf.test_direction(0, model.columns, 1.0, data.y)
    pair = inf.NuisancePair(np.zeros(data.n), data.y)
    iv = polytope_interval(data, lam, model, t, max_order=3, pair=pair, tau_range=(-7.0, 9.0))
    assert iv.interval == (-7.0, 9.0)


def test_single_feature_closed_form():
    # column 1 active with beta = tau - lam, column 2 correlation is constant in tau
    data = Dataset(np.array([[1.0, 1.0], [0.0, 1.0], [0.0, 0.0]]), np.array([3.0, -0.5, 0.2]))
    model = fit_at(data, data.y, 1.0, max_order=1)
    assert model.patterns == [(1,)]
    t = inf.test_direction(0, model.columns, 1.0, data.y)
    iv = polytope_interval(data, 1.0, model, t, max_order=1)
    assert iv.interval[0] == pytest.approx(1.0)
    assert iv.interval[1] == pytest.approx(3.0 + 20.0)


@pytest.mark.parametrize("seed", range(8))
def test_contained_in_homotopy_region(seed):
    data, lam, model = _fitted(seed, zeta=0.9 if seed % 2 else 0.5)
    homo = inf.infer_all(data, lam, model, method="homo", max_order=3)
    poly = inf.infer_all(data, lam, model, method="poly", max_order=3)
    for h, p in zip(homo, poly):
        assert p.region.intervals[0][0] < p.stat < p.region.intervals[0][1]
        assert h.region.covers(p.region, tol=1e-9)
        assert h.p_selective >= 0 and p.p_selective >= 0


@pytest.mark.parametrize("seed", range(3))
def test_fixed_sign_kkt_probes(seed):
    data, lam, model = _fitted(seed + 20, n=40, m=6, d=2)
    rng = np.random.default_rng(seed)
    for j in range(len(model)):
        t = inf.test_direction(j, model.columns, 1.0, data.y)
        pair = inf.nuisance_decomposition(data.y, t.eta)
        rng_lo, rng_hi = t.stat_obs - 20 * t.sigma_eta, t.stat_obs + 20 * t.sigma_eta
        lo, hi = polytope_interval(data, lam, model, t, max_order=2, pair=pair).interval
        for tau in rng.uniform(lo, hi, 20):
            assert _fixed_sign_kkt(data, lam, model, pair, tau, 2)
        off = 1e-6 * t.sigma_eta
        if lo > rng_lo:
            assert not _fixed_sign_kkt(data, lam, model, pair, lo - off, 2)
        if hi < rng_hi:
            assert not _fixed_sign_kkt(data, lam, model, pair, hi + off, 2)


def test_split_rows_odd_and_deterministic():
    a, b = split_rows(7, 3)
    assert len(a) == 4 and len(b) == 3
    assert sorted(np.concatenate([a, b]).tolist()) == list(range(7))
    c, d = split_rows(7, 3)
    assert a.tolist() == c.tolist() and b.tolist() == d.tolist()


def test_data_split_deterministic():
    data = random_dataset(4, n=80, m=6, zeta=0.5)
    lam = 0.3 * lambda_max(data, max_order=2)[0]
    r1 = data_split_inference(data, lam, 11, max_order=2)
    r2 = data_split_inference(data, lam, 11, max_order=2)
    assert r1
    for a, b in zip(r1, r2):
        assert (a.pattern, a.stat, a.p_selective, a.ci) == (b.pattern, b.stat, b.p_selective, b.ci)


def test_data_split_classical_test():
    data = random_dataset(5, n=80, m=6, zeta=0.5)
    lam = 0.3 * lambda_max(data, max_order=2)[0]
    for r in data_split_inference(data, lam, 2, 0.1, max_order=2):
        z = r.stat / r.sigma_eta
        assert r.p_selective == pytest.approx(math.erfc(abs(z) / math.sqrt(2)), rel=1e-9)
        assert r.ci == pytest.approx(inf.z_interval(r.stat, r.sigma_eta, 0.1))


def test_duplicate_rows_select_identically():
    base = random_dataset(6, n=30, m=5, zeta=0.5)
    data = Dataset(np.vstack([base.Z, base.Z]), np.concatenate([base.y, base.y]))
    lam = 0.3 * lambda_max(base, max_order=2)[0]
    first = lambda_path(data.subset(np.arange(30)), lam, max_order=2).final
    second = lambda_path(data.subset(np.arange(30, 60)), lam, max_order=2).final
    assert first.patterns == second.patterns


def test_data_split_needs_four_rows():
    with pytest.raises(InputError):
        data_split_inference(Dataset(np.eye(3), np.ones(3)), 0.1, 0, max_order=1)
