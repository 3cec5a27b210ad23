"""Exact regularization path (decreasing lambda) over the pattern tree.

The objective is ``0.5 * ||y - X b||^2 + 0.5 * alpha_ridge * ||b||^2 + lam * ||b||_1``
with ``X`` the implicit matrix of all interaction columns up to ``max_order``.
No intercept and no column scaling are applied.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .elastic_net import lambda_prune_test, reference_stats
from .errors import ConsistencyError, DegeneracyError, EmptyModelError, InputError
from .patterns import (
    Dataset,
    Node,
    Pattern,
    branch_and_bound_max_abs,
    branch_and_bound_min_step,
    feature_vector,
)

COND_LIMIT = 1e12
TIE_REL = 1e-12
PRUNE_MARGIN_REL = 1e-10
SPAN_TOL = 1e-9


@dataclass
class ActiveModel:
    """Active patterns with their coefficients, signs and Gram factorization."""

    patterns: list[Pattern]
    beta: np.ndarray
    signs: np.ndarray
    lam: float
    columns: np.ndarray
    alpha_ridge: float = 0.0
    gram_factor: tuple | None = field(default=None, repr=False)
    excluded: set = field(default_factory=set)

    @classmethod
    def empty(cls, n: int, lam: float, alpha_ridge: float = 0.0) -> "ActiveModel":
        return cls([], np.zeros(0), np.zeros(0), lam, np.zeros((n, 0)), alpha_ridge)

    def __len__(self) -> int:
        return len(self.patterns)

    def copy(self) -> "ActiveModel":
        return ActiveModel(
            list(self.patterns), self.beta.copy(), self.signs.copy(), self.lam,
            self.columns.copy(), self.alpha_ridge, self.gram_factor, set(self.excluded),
        )

    @property
    def gram(self) -> np.ndarray:
        X = self.columns
        return X.T @ X + self.alpha_ridge * np.eye(X.shape[1])

    def refactor(self, param: float | None = None) -> None:
        if not self.patterns:
            self.gram_factor = None
            return
        G = self.gram
        cond = np.linalg.cond(G)
        if not np.isfinite(cond) or cond > COND_LIMIT:
            culprit = self.patterns[-1]
            raise DegeneracyError(
                f"active Gram matrix is singular (condition {cond:.3g}) after adding "
                f"pattern {culprit}",
                pattern=culprit, param=param,
            )
        self.gram_factor = cho_factor(G)

    def solve(self, rhs) -> np.ndarray:
        if not self.patterns:
            return np.zeros(0)
        if self.gram_factor is None:
            self.refactor()
        return cho_solve(self.gram_factor, np.asarray(rhs, dtype=float))

    def add(self, pattern: Pattern, column: np.ndarray, sign: float) -> None:
        self.patterns.append(pattern)
        self.beta = np.append(self.beta, 0.0)
        self.signs = np.append(self.signs, float(sign))
        self.columns = np.column_stack([self.columns, column])
        self.gram_factor = None

    def remove(self, idx: int) -> None:
        del self.patterns[idx]
        self.beta = np.delete(self.beta, idx)
        self.signs = np.delete(self.signs, idx)
        self.columns = np.delete(self.columns, idx, axis=1)
        self.gram_factor = None
        self.excluded.clear()

    def in_span(self, x: np.ndarray) -> bool:
        """Whether ``x`` is a linear combination of the active columns (lasso only)."""
        if self.alpha_ridge > 0.0 or not self.patterns:
            return False
        coef, *_ = np.linalg.lstsq(self.columns, x, rcond=None)
        return float(np.linalg.norm(x - self.columns @ coef)) <= SPAN_TOL * float(np.linalg.norm(x))

    def fitted(self) -> np.ndarray:
        return self.columns @ self.beta

    def support(self) -> frozenset:
        return frozenset(p for p, b in zip(self.patterns, self.beta) if b != 0.0)


@dataclass
class Breakpoint:
    param: float
    event: str
    pattern: Pattern
    beta_after: np.ndarray
    active_after: tuple[Pattern, ...]
    signs_after: np.ndarray | None = None
    nodes_visited: int = 0


@dataclass
class StepResult:
    delta: float
    event: str | None
    pattern: Pattern | None = None
    index: int | None = None
    sign: float = 0.0
    nodes_visited: int = 0
    pruned: list | None = None
    group: tuple = ()


@dataclass
class LambdaPathResult:
    lam_max: float
    first: Pattern
    breakpoints: list[Breakpoint]
    final: ActiveModel
    nodes_visited: list[int]
    kkt: list = field(default_factory=list)


def _deletion_steps(beta, nu, signs=None) -> np.ndarray:
    steps = np.full(len(beta), math.inf)
    for j, (b, g) in enumerate(zip(beta, nu)):
        if b == 0.0:
            continue
        if signs is not None and b * signs[j] < 0.0:
            steps[j] = 0.0
        elif g != 0.0 and -b / g > 0.0:
            steps[j] = -b / g
    return steps


def deletion_step(beta: np.ndarray, nu: np.ndarray, patterns, tie_tol: float = 0.0,
                  signs: np.ndarray | None = None):
    """Smallest positive ``-beta_j / nu_j``; ``(inf, None)`` when there is none.

    With ``signs`` given, a coefficient whose sign disagrees with its recorded
    sign leaves at step 0.
    """
    best, idx = math.inf, None
    for j, step in enumerate(_deletion_steps(beta, nu, signs)):
        if step == math.inf:
            continue
        if step < best - tie_tol or (
            abs(step - best) <= tie_tol and idx is not None and patterns[j] < patterns[idx]
        ):
            best, idx = step, j
    return best, idx


def deletion_group(beta, nu, patterns, best: float, tie_tol: float = 0.0, signs=None):
    """Patterns whose deletion step lies within ``tie_tol`` of ``best``, sorted.

    Coefficients that reach zero together (duplicate columns under a ridge
    penalty, for instance) must leave together: removing only one of them
    can flip the sign of the other.
    """
    steps = _deletion_steps(beta, nu, signs)
    return tuple(sorted(patterns[j] for j in np.flatnonzero(np.abs(steps - best) <= tie_tol)))


def search_excluding_span(data: Dataset, model: ActiveModel, search) -> tuple:
    """Run ``search(excluded)`` until its winner is not in the active column span.

    A column in the span of the active columns has correlation pinned to
    ``a's * lam``; when it ties the boundary it can enter only at a step that is
    pure rounding noise, and including it would make the Gram singular.  Such
    winners are recorded in ``model.excluded`` and the search is repeated.
    """
    visited = 0
    while True:
        res = search(frozenset(model.excluded))
        visited += res.nodes_visited
        if res.argmin is None or not model.in_span(feature_vector(res.argmin, data).values):
            return res, visited
        model.excluded.add(res.argmin)


class LambdaStepRule:
    """Inclusion step and pruning rule for one segment of the lambda path.

    Along the segment ``beta(lam_t - delta) = beta + delta * nu``.  An inactive
    pattern with residual correlation ``rho - delta * eta`` enters when that
    reaches ``+-(lam_t - delta)``, written against a reference active pattern
    k through ``rho_bar_k`` and ``eta_bar_k``.
    """

    def __init__(self, model: ActiveModel, w: np.ndarray, v: np.ndarray, nu: np.ndarray,
                 excluded=frozenset()):
        X = model.columns
        self.alpha = model.alpha_ridge
        self.active = frozenset(model.patterns) | excluded
        self.rho_bar, self.eta_bar = reference_stats(X.T @ w, X.T @ v, model.beta, nu, self.alpha)
        k = int(np.argmax(np.abs(self.rho_bar)))
        self.r = abs(self.rho_bar[k])
        self.e = abs(self.eta_bar[k])
        self.margin = PRUNE_MARGIN_REL * model.lam

    def candidate(self, node: Node) -> float:
        if node.pattern in self.active:
            return math.inf
        rho, eta = node.dots[0], node.dots[1]
        best = math.inf
        for s in (1.0, -1.0):
            den = self.e - s * eta
            if den > 0.0:
                step = max(self.r - s * rho, 0.0) / den
                if step < best:
                    best = step
        return best

    def prune(self, node: Node, best: float) -> bool:
        return lambda_prune_test(
            node.bounds[0], node.bounds[1], best, self.rho_bar, self.eta_bar, self.margin
        )


def lambda_max(data: Dataset, *, max_order: int, prune: bool = True):
    """``(lam0, first, nodes_visited)`` with ``lam0 = max_l |x_l' y|``."""
    if not np.any(data.y):
        raise InputError("response is identically zero")
    res = branch_and_bound_max_abs(data, max_order, data.y, prune=prune)
    if res.argmin is None or res.value == 0.0:
        raise EmptyModelError("empty model: every pattern column is orthogonal to y")
    return res.value, res.argmin, res.nodes_visited


def lambda_direction(model: ActiveModel) -> np.ndarray:
    """Solve ``(X_A'X_A + alpha I) nu = s_A``."""
    return model.solve(model.signs)


def _signed_correlation(data: Dataset, pattern: Pattern, r: np.ndarray) -> tuple[np.ndarray, float]:
    x = feature_vector(pattern, data).values
    return x, float(x @ r)


def lambda_step(
    data: Dataset,
    model: ActiveModel,
    *,
    max_order: int,
    lam_target: float = 0.0,
    prune: bool = True,
    tie_tol: float | None = None,
    record_pruned: bool = False,
) -> StepResult:
    """Next kink below ``model.lam``; ``event=None`` means ``lam_target`` comes first."""
    lam = model.lam
    cap = lam - lam_target
    if tie_tol is None:
        tie_tol = TIE_REL * lam
    if not model.patterns:
        res = branch_and_bound_max_abs(data, max_order, data.y, prune=prune, tie_tol=tie_tol)
        if res.argmin is None or res.value <= lam_target:
            return StepResult(cap, None, nodes_visited=res.nodes_visited)
        _, c = _signed_correlation(data, res.argmin, data.y)
        return StepResult(lam - res.value, "inclusion", res.argmin, sign=math.copysign(1.0, c),
                          nodes_visited=res.nodes_visited)

    nu = lambda_direction(model)
    w = data.y - model.fitted()
    v = model.columns @ nu
    d2, jdel = deletion_step(model.beta, nu, model.patterns, tie_tol, model.signs)
    weights = np.vstack([w, v])

    def search(excluded):
        rule = LambdaStepRule(model, w, v, nu, excluded)
        return branch_and_bound_min_step(
            data, max_order, weights, rule.candidate, rule.prune,
            prune=prune, initial=min(d2, cap), tie_tol=tie_tol, record_pruned=record_pruned,
        )

    res, visited = search_excluding_span(data, model, search)
    if res.argmin is not None:
        _, c = _signed_correlation(data, res.argmin, w - res.value * v)
        return StepResult(res.value, "inclusion", res.argmin, sign=math.copysign(1.0, c),
                          nodes_visited=visited, pruned=res.pruned)
    if jdel is not None and d2 < cap:
        group = deletion_group(model.beta, nu, model.patterns, d2, tie_tol, model.signs)
        return StepResult(d2, "deletion", model.patterns[jdel], index=jdel,
                          nodes_visited=visited, pruned=res.pruned, group=group)
    return StepResult(cap, None, nodes_visited=visited, pruned=res.pruned)


def apply_step(data: Dataset, model: ActiveModel, step: StepResult, param: float):
    """Apply the event of ``step`` at ``param``; yields ``(event, pattern)`` per change.

    A tied deletion group is removed one pattern at a time in lexicographic
    order, each change refactoring the model.
    """
    if step.event == "inclusion":
        model.add(step.pattern, feature_vector(step.pattern, data).values, step.sign)
        model.refactor(param=param)
        yield step.event, step.pattern
        return
    for pattern in step.group or (step.pattern,):
        model.remove(model.patterns.index(pattern))
        model.refactor(param=param)
        yield "deletion", pattern


def lambda_path(
    data: Dataset,
    lam_target: float | None = None,
    *,
    max_order: int,
    k_max: int | None = None,
    alpha_ridge: float = 0.0,
    prune: bool = True,
    lam_frac: float = 0.01,
    certify: bool = False,
    max_kinks: int = 100_000,
) -> LambdaPathResult:
    """Follow the path from ``lam_max`` down to ``lam_target``.

    Stops at ``lam_target`` (default ``lam_frac * lam_max``), or once ``k_max``
    patterns are active.  In the latter case the returned model sits halfway
    between that kink and the next one, so every coefficient is nonzero.
    With ``certify=True`` the optimality conditions are checked at every kink
    and a :class:`ConsistencyError` is raised on violation.
    """
    if alpha_ridge < 0:
        raise InputError("alpha_ridge must be nonnegative")
    lam0, first, nodes0 = lambda_max(data, max_order=max_order, prune=prune)
    if lam_target is None:
        lam_target = lam_frac * lam0
    if not lam_target > 0:
        raise InputError(f"lam_target must be positive, got {lam_target}")
    if k_max is not None and k_max < 1:
        raise InputError("k_max must be at least 1")
    model = ActiveModel.empty(data.n, lam_target, alpha_ridge)
    if lam_target > lam0:
        return LambdaPathResult(lam0, first, [], model, [nodes0])
    x0 = feature_vector(first, data).values
    model.lam = lam0
    model.add(first, x0, math.copysign(1.0, float(x0 @ data.y)))
    model.refactor(param=lam0)
    breakpoints: list[Breakpoint] = []
    reports: list[KKTReport] = []
    nodes = [nodes0]
    tie_tol = TIE_REL * lam0
    kkt_tol = 1e-6 * lam0
    if lam_target == lam0:
        return LambdaPathResult(lam0, first, breakpoints, model, nodes, reports)

    while len(breakpoints) < max_kinks:
        step = lambda_step(data, model, max_order=max_order, lam_target=lam_target,
                           prune=prune, tie_tol=tie_tol)
        nodes.append(step.nodes_visited)
        nu = lambda_direction(model)
        if k_max is not None and len(model) >= k_max:
            half = step.delta if step.event is None else 0.5 * step.delta
            if len(model):
                model.beta = model.beta + half * nu
            model.lam = model.lam - half
            break
        if step.event is None:
            if len(model):
                model.beta = model.beta + step.delta * nu
            model.lam = lam_target
            break
        new_lam = model.lam - step.delta
        if len(model):
            model.beta = model.beta + step.delta * nu
        model.lam = new_lam
        for event, pattern in apply_step(data, model, step, new_lam):
            breakpoints.append(Breakpoint(
                new_lam, event, pattern, model.beta.copy(), tuple(model.patterns),
                model.signs.copy(), step.nodes_visited,
            ))
        if certify:
            report = check_kkt(data, model, data.y, new_lam, max_order=max_order)
            reports.append(report)
            if not report.ok(kkt_tol):
                raise ConsistencyError(f"optimality violated at lambda={new_lam}: {report}")
    return LambdaPathResult(lam0, first, breakpoints, model, nodes, reports)


@dataclass
class KKTReport:
    active_gap: float
    sign_violations: int
    inactive_max: float
    inactive_argmax: Pattern | None
    lam: float

    def ok(self, tol: float) -> bool:
        return (self.active_gap <= tol and self.sign_violations == 0
                and self.inactive_max <= self.lam + tol)


def check_kkt(data: Dataset, model: ActiveModel, y, lam: float, *, max_order: int,
              prune: bool = True) -> KKTReport:
    """Stationarity check; inactive patterns are swept with the pruned max search."""
    y = np.asarray(y, dtype=float)
    w = y - model.fitted()
    gap, bad = 0.0, 0
    if len(model):
        grad = model.columns.T @ w - model.alpha_ridge * model.beta
        gap = float(np.max(np.abs(np.abs(grad) - lam)))
        # rounding-level coefficients (tied deletions in flight) count as zero
        nz = np.abs(model.beta) > 1e-12 * max(1.0, float(np.max(np.abs(model.beta))))
        bad = int(np.sum(np.sign(grad[nz]) != model.signs[nz])
                  + np.sum(np.sign(model.beta[nz]) != model.signs[nz]))
    res = branch_and_bound_max_abs(data, max_order, w, exclude=model.patterns, prune=prune)
    return KKTReport(gap, bad, res.value, res.argmin, lam)
