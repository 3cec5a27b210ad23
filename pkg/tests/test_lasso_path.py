import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from shimsi.errors import DegeneracyError, EmptyModelError, InputError
from shimsi.lasso_path import (
    ActiveModel,
    check_kkt,
    deletion_group,
    deletion_step,
    lambda_direction,
    lambda_max,
    lambda_path,
    lambda_step,
)
from shimsi.oracle import dense_expand, dense_kink_signature, dense_lasso_path
from shimsi.patterns import Dataset

from conftest import kink_signature, random_dataset, same_kinks


def _model(cols, signs, lam=1.0, beta=None, patterns=None):
    cols = np.asarray(cols, dtype=float)
    k = cols.shape[1]
    pats = patterns or [(j + 1,) for j in range(k)]
    beta = np.zeros(k) if beta is None else np.asarray(beta, dtype=float)
    return ActiveModel(pats, beta, np.asarray(signs, dtype=float), lam, cols)


class TestLambdaMax:
    def test_single_column(self):
        lam0, first, _ = lambda_max(Dataset(np.array([[1.0], [0.0]]), np.array([2.0, 1.0])),
                                    max_order=1)
        assert lam0 == 2.0 and first == (1,)

    def test_zero_response(self):
        with pytest.raises(InputError):
            lambda_max(Dataset(np.eye(2), np.zeros(2)), max_order=1)

    def test_orthogonal_response_is_empty_model(self):
        with pytest.raises(EmptyModelError):
            lambda_max(Dataset(np.array([[1.0], [0.0]]), np.array([0.0, 1.0])), max_order=1)

    @pytest.mark.parametrize("seed", range(5))
    def test_matches_dense_argmax(self, seed):
        data = random_dataset(seed, n=30, m=6, zeta=0.5)
        lam0, first, _ = lambda_max(data, max_order=3)
        X, pats = dense_expand(data, 3)
        c = np.abs(X.T @ data.y)
        assert lam0 == pytest.approx(c.max(), rel=1e-12)
        assert first == pats[int(np.argmax(c))]


class TestDirection:
    def test_orthonormal_single(self):
        np.testing.assert_allclose(lambda_direction(_model([[1.0], [0.0]], [1])), [1.0])

    def test_orthonormal_pair(self):
        np.testing.assert_allclose(lambda_direction(_model(np.eye(2), [1, 1])), [1.0, 1.0])

    def test_correlated_pair_closed_form(self):
        X = np.array([[1.0, 1.0], [1.0, 0.0], [0.0, 1.0]])
        s = np.array([1.0, -1.0])
        a, b, c = 2.0, 1.0, 2.0  # X'X = [[2, 1], [1, 2]]
        inv = np.array([[c, -b], [-b, a]]) / (a * c - b * b)
        np.testing.assert_allclose(lambda_direction(_model(X, s)), inv @ s, rtol=1e-14)


def test_orthonormal_inclusion_step():
    data = Dataset(np.eye(2), np.array([3.0, 1.0]))
    model = _model([[1.0], [0.0]], [1], lam=3.0, patterns=[(1,)])
    step = lambda_step(data, model, max_order=1)
    assert step.event == "inclusion" and step.pattern == (2,)
    assert step.delta == pytest.approx(2.0)


def test_deletion_step_example():
    assert deletion_step(np.array([1.0]), np.array([-2.0]), [(1,)]) == (0.5, 0)


def test_deletion_step_none_positive():
    step, idx = deletion_step(np.array([1.0, -1.0]), np.array([1.0, -1.0]), [(1,), (2,)])
    assert step == math.inf and idx is None


def test_deletion_step_wrong_sign_leaves_first():
    beta, nu = np.array([0.5, -1e-17]), np.array([-1.0, 1.0])
    assert deletion_step(beta, nu, [(1,), (2,)], signs=np.array([1.0, 1.0])) == (0.0, 1)


def test_deletion_group_collects_ties():
    beta, nu = np.array([1.0, 2.0, 3.0]), np.array([-2.0, -4.0, -1.0])
    assert deletion_group(beta, nu, [(2,), (1, 3), (3,)], 0.5, 1e-12) == ((1, 3), (2,))
    assert deletion_group(beta, nu, [(2,), (1, 3), (3,)], 3.0) == ((3,),)


def test_target_at_lambda_max():
    data = Dataset(np.eye(3), np.array([3.0, -2.0, 1.0]))
    res = lambda_path(data, 3.0, max_order=1)
    assert res.breakpoints == []
    assert res.final.patterns == [(1,)]
    np.testing.assert_array_equal(res.final.beta, [0.0])


def test_target_above_lambda_max_is_empty():
    data = Dataset(np.eye(3), np.array([3.0, -2.0, 1.0]))
    assert len(lambda_path(data, 4.0, max_order=1).final) == 0


def test_soft_threshold_path():
    y = np.array([0.7, -3.0, 2.0, -1.2, 0.1])
    data = Dataset(np.eye(5), y)
    res = lambda_path(data, 0.05, max_order=1)
    order = np.argsort(-np.abs(y))
    assert [bp.param for bp in res.breakpoints] == pytest.approx(list(np.abs(y)[order][1:]))
    assert [bp.pattern for bp in res.breakpoints] == [(int(j) + 1,) for j in order[1:]]
    final = dict(zip(res.final.patterns, res.final.beta))
    for j in range(5):
        assert final[(j + 1,)] == pytest.approx(np.sign(y[j]) * (abs(y[j]) - 0.05))


def test_rejects_bad_target():
    with pytest.raises(InputError):
        lambda_path(random_dataset(0), -1.0, max_order=2)


def test_duplicate_columns_raise_degeneracy():
    X = np.array([[1.0, 1.0], [0.0, 0.0], [1.0, 1.0]])
    model = _model(X, [1, 1], patterns=[(1,), (2,)])
    with pytest.raises(DegeneracyError) as exc:
        model.refactor(param=0.5)
    assert exc.value.pattern == (2,)


def test_duplicate_column_never_enters():
    rng = np.random.default_rng(0)
    Z = (rng.random((30, 3)) > 0.5).astype(float)
    Z = np.column_stack([Z, Z[:, 0]])
    data = Dataset(Z, rng.standard_normal(30))
    res = lambda_path(data, max_order=1, certify=True)
    assert not {(1,), (4,)} <= set(res.final.patterns)


@pytest.mark.parametrize("seed", range(8))
def test_pruned_matches_unpruned_and_dense(seed):
    data = random_dataset(seed, n=50, m=8, zeta=0.9 if seed % 2 else 0.5)
    pr = lambda_path(data, max_order=3, certify=True)
    un = lambda_path(data, max_order=3, prune=False)
    X, pats = dense_expand(data, 3)
    dn = dense_lasso_path(X, data.y, 0.01 * pr.lam_max)
    a = kink_signature(pr.breakpoints)
    assert same_kinks(a, kink_signature(un.breakpoints), pr.lam_max)
    assert same_kinks(a, dense_kink_signature(dn, pats), pr.lam_max)
    assert sum(pr.nodes_visited) <= sum(un.nodes_visited)
    assert all(r.ok(1e-6 * pr.lam_max) for r in pr.kkt)


@settings(max_examples=15, deadline=None)
@given(seed=st.integers(0, 2**31), frac=st.floats(0.05, 0.9))
def test_kkt_and_piecewise_linearity(seed, frac):
    data = random_dataset(seed, n=30, m=6, zeta=0.6)
    res = lambda_path(data, max_order=2, lam_frac=frac)
    rep = check_kkt(data, res.final, data.y, res.final.lam, max_order=2)
    assert rep.ok(1e-6 * res.lam_max)
    # the final beta is the dense re-solve on the final active set
    m = res.final
    if len(m):
        nz = m.beta != 0
        G = m.columns.T @ m.columns
        direct = np.linalg.solve(G, m.columns.T @ data.y - m.lam * m.signs)
        np.testing.assert_allclose(m.beta[nz], direct[nz], atol=1e-8 * res.lam_max)


def test_k_max_stops_between_kinks():
    data = random_dataset(4, n=60, m=8, zeta=0.5)
    full = lambda_path(data, max_order=2)
    capped = lambda_path(data, max_order=2, k_max=3)
    assert len(capped.final) == 3
    assert np.all(capped.final.beta != 0)
    kinks = [bp.param for bp in full.breakpoints]
    assert capped.final.lam < kinks[len(capped.breakpoints) - 1]


def test_deterministic():
    data = random_dataset(9, n=40, m=8, zeta=0.7)
    a = lambda_path(data, max_order=3)
    b = lambda_path(data, max_order=3)
    assert kink_signature(a.breakpoints) == kink_signature(b.breakpoints)
    np.testing.assert_array_equal(a.final.beta, b.final.beta)
