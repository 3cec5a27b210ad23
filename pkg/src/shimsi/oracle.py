"""Brute-force references: dense expansion and dense homotopy solvers.

These materialize every interaction column, so they refuse trees larger than
``DENSE_CAP`` columns.  The dense solvers share no code with the tree solvers
beyond :func:`~shimsi.patterns.iter_patterns`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import CapRefusalError, DegeneracyError, InputError
from .lasso_path import lambda_path
from .patterns import Dataset, Pattern, iter_patterns, tree_size
from .tau_path import tau_path

DENSE_CAP = 50_000


def dense_expand(data: Dataset, max_order: int, *, cap: int = DENSE_CAP):
    """``(X, patterns)`` with one column per pattern in canonical order."""
    p = tree_size(data.m, max_order)
    if p > cap:
        raise CapRefusalError(f"dense expansion needs {p} columns, cap is {cap}")
    patterns = list(iter_patterns(data.m, max_order))
    X = np.empty((data.n, p))
    for i, pat in enumerate(patterns):
        X[:, i] = np.prod(data.Z[:, [j - 1 for j in pat]], axis=1)
    return X, patterns


@dataclass
class DenseKink:
    param: float
    event: str
    index: int
    active_after: tuple[int, ...]
    beta_after: np.ndarray


@dataclass
class DensePath:
    kinks: list[DenseKink]
    active: list[int]
    beta: np.ndarray
    start: float
    first: int | None = None


def _solve(X: np.ndarray, active: list[int], rhs: np.ndarray) -> np.ndarray:
    XA = X[:, active]
    G = XA.T @ XA
    if np.linalg.cond(G) > 1e12:
        raise DegeneracyError("dense oracle: singular active Gram", pattern=active[-1])
    return np.linalg.solve(G, rhs)


def _excluded(X: np.ndarray, active: list[int]) -> np.ndarray:
    mask = np.zeros(X.shape[1], dtype=bool)
    mask[active] = True
    return mask


def _in_span(X: np.ndarray, active: list[int], j: int) -> bool:
    XA = X[:, active]
    return np.linalg.matrix_rank(np.column_stack([XA, X[:, j]])) <= np.linalg.matrix_rank(XA)


def _pick_outside_span(X, steps, active, bar, tie, enabled):
    mask = _excluded(X, active)
    while True:
        j = _pick(steps, mask, bar, tie)
        if j is None or not enabled or not active or not _in_span(X, active, j):
            return j
        mask[j] = True


def _pick(steps: np.ndarray, excluded: np.ndarray, bar: float, tie: float):
    """Mimic a lexicographic scan that only replaces the incumbent when beaten by ``tie``."""
    best, arg = bar, None
    for i in np.flatnonzero(~excluded & (steps < bar - tie)):
        if steps[i] < best - tie:
            best, arg = steps[i], int(i)
    return arg


def _deletion(beta: np.ndarray, nu: np.ndarray, tie: float, signs):
    """Smallest positive ``-beta/nu`` and every index tied with it (lowest first).

    Wrong signs leave at 0.
    """
    beta = np.asarray(beta, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        r = np.where((beta != 0) & (nu != 0), -beta / nu, np.inf)
    r[~(r > 0)] = np.inf
    r[(beta * np.asarray(signs, dtype=float)) < 0] = 0.0
    if not r.size or not np.isfinite(r.min()):
        return math.inf, []
    tied = np.flatnonzero(r <= r.min() + tie)
    return float(r[tied[0]]), [int(i) for i in np.flatnonzero(np.abs(r - r[tied[0]]) <= tie)]


def _delete_group(active, signs, beta, group, param, kinks):
    # indices in group are positions; the design is ordered lexicographically
    for k in sorted((active[i] for i in group)):
        i = active.index(k)
        active.pop(i)
        signs.pop(i)
        beta = np.delete(beta, i)
        kinks.append(DenseKink(param, "deletion", k, tuple(active), beta.copy()))
    return beta


def dense_lasso_path(X: np.ndarray, y: np.ndarray, lam_target: float, *,
                     span_exclusion: bool = True, max_kinks: int = 100_000) -> DensePath:
    """Homotopy on an explicit design, decreasing lambda to ``lam_target``."""
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    c0 = X.T @ y
    lam0 = float(np.max(np.abs(c0))) if c0.size else 0.0
    if lam0 == 0.0 or lam_target > lam0:
        return DensePath([], [], np.zeros(0), lam0)
    first = int(np.argmax(np.abs(c0)))
    active, signs, beta = [first], [math.copysign(1.0, c0[first])], np.zeros(1)
    lam = lam0
    tie = 1e-12 * lam0
    kinks: list[DenseKink] = []
    while lam > lam_target and len(kinks) < max_kinks:
        cap = lam - lam_target
        if not active:
            c = X.T @ y
            i = int(np.argmax(np.abs(c)))
            if abs(c[i]) <= lam_target:
                break
            lam = float(abs(c[i]))
            active, signs, beta = [i], [math.copysign(1.0, c[i])], np.zeros(1)
            kinks.append(DenseKink(lam, "inclusion", i, (i,), beta.copy()))
            continue
        s = np.array(signs)
        nu = _solve(X, active, s)
        c = X.T @ (y - X[:, active] @ beta)
        a = X.T @ (X[:, active] @ nu)
        steps = np.full(X.shape[1], np.inf)
        for sg in (1.0, -1.0):
            den = 1.0 - sg * a
            with np.errstate(divide="ignore", invalid="ignore"):
                st = np.where(den > 0, np.maximum(lam - sg * c, 0.0) / den, np.inf)
            steps = np.minimum(steps, st)
        d2, jdel = _deletion(beta, nu, tie, signs)
        bar = min(d2, cap)
        j = _pick_outside_span(X, steps, active, bar, tie, span_exclusion)
        if j is not None:
            delta = float(steps[j])
            beta = beta + delta * nu
            lam -= delta
            cj = float(X[:, j] @ (y - X[:, active] @ beta))
            active.append(j)
            signs.append(math.copysign(1.0, cj))
            beta = np.append(beta, 0.0)
            kinks.append(DenseKink(lam, "inclusion", j, tuple(active), beta.copy()))
        elif jdel and d2 < cap:
            lam -= d2
            beta = _delete_group(active, signs, beta + d2 * nu, jdel, lam, kinks)
        else:
            beta = beta + cap * nu
            lam = lam_target
    return DensePath(kinks, active, beta, lam0, first)


def dense_tau_path(X: np.ndarray, lam: float, b, q, tau_min: float, tau_max: float, *,
                   span_exclusion: bool = True, max_kinks: int = 100_000) -> DensePath:
    """Fixed-lambda homotopy in ``tau`` on an explicit design."""
    X = np.asarray(X, dtype=float)
    b = np.asarray(b, dtype=float)
    q = np.asarray(q, dtype=float)
    init = dense_lasso_path(X, q + b * tau_min, lam, span_exclusion=span_exclusion)
    active = [i for i, bj in zip(init.active, init.beta) if bj != 0.0]
    beta = np.array([bj for bj in init.beta if bj != 0.0])
    signs = list(np.sign(beta))
    tau = float(tau_min)
    tie = 1e-12 * (tau_max - tau_min)
    kinks: list[DenseKink] = []
    while len(kinks) < max_kinks:
        cap = tau_max - tau
        if active:
            nu = _solve(X, active, X[:, active].T @ b)
            v = X[:, active] @ nu
        else:
            nu, v = np.zeros(0), np.zeros_like(b)
        c = X.T @ (q + b * tau - (X[:, active] @ beta if active else 0.0))
        g = X.T @ (b - v)
        with np.errstate(divide="ignore", invalid="ignore"):
            steps = np.where(g != 0, np.maximum(lam - np.sign(g) * c, 0.0) / np.abs(g), np.inf)
        d2, jdel = _deletion(beta, nu, tie, signs)
        j = _pick_outside_span(X, steps, active, min(d2, cap), tie, span_exclusion)
        if j is not None:
            delta = float(steps[j])
            beta = beta + delta * nu if active else beta
            tau += delta
            active.append(j)
            signs.append(float(np.sign(g[j])))
            beta = np.append(beta, 0.0)
            kinks.append(DenseKink(tau, "inclusion", j, tuple(active), beta.copy()))
        elif jdel and d2 < cap:
            tau += d2
            beta = _delete_group(active, signs, beta + d2 * nu, jdel, tau, kinks)
        else:
            break
    return DensePath(kinks, active, beta, tau_min)


def unpruned_lambda_path(data: Dataset, lam_target=None, **kwargs):
    kwargs["prune"] = False
    return lambda_path(data, lam_target, **kwargs)


def unpruned_tau_path(data: Dataset, lam, b, q, tau_min, tau_max, **kwargs):
    kwargs["prune"] = False
    return tau_path(data, lam, b, q, tau_min, tau_max, **kwargs)


def augmented_design(X: np.ndarray, y: np.ndarray, alpha_ridge: float):
    p = X.shape[1]
    Xa = np.vstack([X, math.sqrt(alpha_ridge) * np.eye(p)])
    return Xa, np.concatenate([y, np.zeros(p)])


def augmented_elnet_oracle(data: Dataset, max_order: int, alpha_ridge: float,
                           lam_target: float, *, cap: int = DENSE_CAP):
    """Lasso path of the explicitly augmented design; returns ``(DensePath, patterns)``."""
    if alpha_ridge < 0:
        raise InputError("alpha_ridge must be nonnegative")
    X, patterns = dense_expand(data, max_order, cap=cap)
    Xa, ya = augmented_design(X, data.y, alpha_ridge)
    path = dense_lasso_path(Xa, ya, lam_target, span_exclusion=alpha_ridge == 0.0)
    return path, patterns


def augmented_tau_oracle(data: Dataset, max_order: int, alpha_ridge: float, lam: float,
                         b, q, tau_min: float, tau_max: float, *, cap: int = DENSE_CAP):
    X, patterns = dense_expand(data, max_order, cap=cap)
    p = X.shape[1]
    Xa = np.vstack([X, math.sqrt(alpha_ridge) * np.eye(p)])
    pad = np.zeros(p)
    path = dense_tau_path(Xa, lam, np.concatenate([b, pad]), np.concatenate([q, pad]),
                          tau_min, tau_max, span_exclusion=alpha_ridge == 0.0)
    return path, patterns


def dense_kink_signature(path: DensePath, patterns: list[Pattern]):
    return [(k.param, k.event, patterns[k.index]) for k in path.kinks]
