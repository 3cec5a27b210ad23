"""Exact solution path in ``tau`` for the response ``y(tau) = q + b * tau`` at fixed lambda."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .elastic_net import reference_stats, tau_prune_test
from .errors import ConsistencyError, EmptyModelError, InputError
from .lasso_path import (
    PRUNE_MARGIN_REL,
    TIE_REL,
    ActiveModel,
    Breakpoint,
    StepResult,
    apply_step,
    check_kkt,
    deletion_group,
    deletion_step,
    lambda_path,
    search_excluding_span,
)
from .patterns import Dataset, Node, Pattern, branch_and_bound_min_step, feature_vector


@dataclass
class TauPathResult:
    """Segments of the tau path.

    ``taus`` holds the segment boundaries, starting at ``tau_min`` and ending at
    ``tau_max``; segment ``i`` spans ``[taus[i], taus[i + 1]]`` with active set
    ``active_sets[i]``, coefficients ``betas[i]`` at its left end and slope
    ``directions[i]``.
    """

    lam: float
    taus: np.ndarray
    active_sets: list[tuple[Pattern, ...]]
    signs: list[np.ndarray]
    betas: list[np.ndarray]
    directions: list[np.ndarray]
    kinks: list[Breakpoint]
    nodes_visited: list[int] = field(default_factory=list)
    kkt: list = field(default_factory=list)
    pruned: list = field(default_factory=list)

    @property
    def tau_min(self) -> float:
        return float(self.taus[0])

    @property
    def tau_max(self) -> float:
        return float(self.taus[-1])

    def segments(self):
        for i, act in enumerate(self.active_sets):
            yield float(self.taus[i]), float(self.taus[i + 1]), act

    def beta_at(self, tau: float) -> tuple[tuple[Pattern, ...], np.ndarray]:
        """Active set and coefficients at ``tau`` by linear reconstruction."""
        i = int(np.searchsorted(self.taus, tau, side="right")) - 1
        i = min(max(i, 0), len(self.active_sets) - 1)
        return self.active_sets[i], self.betas[i] + (tau - self.taus[i]) * self.directions[i]


def tau_directions(active: ActiveModel, b) -> tuple[np.ndarray, callable]:
    """``nu = (X_A'X_A + alpha I)^{-1} X_A'b`` and a per-column ``gamma`` evaluator."""
    b = np.asarray(b, dtype=float)
    nu = active.solve(active.columns.T @ b) if len(active) else np.zeros(0)
    v = active.columns @ nu if len(active) else np.zeros_like(b)
    u = b - v

    def gamma(x) -> float:
        x = x.values if hasattr(x, "values") else np.asarray(x, dtype=float)
        return float(x @ u)

    return nu, gamma


class TauStepRule:
    """Inclusion step and Lemma-style pruning for one tau segment.

    An inactive correlation moves as ``c + delta * gamma`` with ``c = x'w`` and
    ``gamma = x'b - x'v``; it enters when ``|c + delta * gamma| = lam``.
    """

    def __init__(self, model: ActiveModel, lam: float, w, b, v, nu, excluded=frozenset()):
        X = model.columns
        self.lam = lam
        self.active = frozenset(model.patterns) | excluded
        xw, xb, xv = X.T @ w, X.T @ b, X.T @ v
        self.rho_bar, self.eta_bar = reference_stats(xw, xv, model.beta, nu, model.alpha_ridge)
        self.theta = xb
        self.margin = PRUNE_MARGIN_REL * lam

    def candidate(self, node: Node) -> float:
        if node.pattern in self.active:
            return math.inf
        c, theta, eta = node.dots[0], node.dots[1], node.dots[2]
        g = theta - eta
        if g == 0.0:
            return math.inf
        s = 1.0 if g > 0 else -1.0
        return max(self.lam - s * c, 0.0) / abs(g)

    def prune(self, node: Node, best: float) -> bool:
        b_w, b_theta, b_v = node.bounds
        return tau_prune_test(b_w, b_theta, b_v, best, self.lam, self.rho_bar, self.theta,
                              self.eta_bar, self.margin)


def tau_step(
    data: Dataset,
    model: ActiveModel,
    lam: float,
    tau: float,
    *,
    b,
    q,
    max_order: int,
    tau_max: float = math.inf,
    prune: bool = True,
    tie_tol: float = 0.0,
    record_pruned: bool = False,
) -> StepResult:
    """Next kink after ``tau``; ``event=None`` means ``tau_max`` comes first."""
    b = np.asarray(b, dtype=float)
    w = np.asarray(q, dtype=float) + b * tau - model.fitted()
    nu, _ = tau_directions(model, b)
    v = model.columns @ nu
    cap = tau_max - tau
    d2, jdel = deletion_step(model.beta, nu, model.patterns, tie_tol, model.signs)
    weights = np.vstack([w, b, v])

    def search(excluded):
        rule = TauStepRule(model, lam, w, b, v, nu, excluded)
        return branch_and_bound_min_step(
            data, max_order, weights, rule.candidate, rule.prune,
            prune=prune, initial=min(d2, cap), tie_tol=tie_tol, record_pruned=record_pruned,
        )

    res, visited = search_excluding_span(data, model, search)
    if res.argmin is not None:
        x = feature_vector(res.argmin, data).values
        sign = math.copysign(1.0, float(x @ (b - v)))
        return StepResult(res.value, "inclusion", res.argmin, sign=sign,
                          nodes_visited=visited, pruned=res.pruned)
    if jdel is not None and d2 < cap:
        group = deletion_group(model.beta, nu, model.patterns, d2, tie_tol, model.signs)
        return StepResult(d2, "deletion", model.patterns[jdel], index=jdel,
                          nodes_visited=visited, pruned=res.pruned, group=group)
    return StepResult(cap, None, nodes_visited=visited, pruned=res.pruned)


def fit_at(data: Dataset, y, lam: float, *, max_order: int, alpha_ridge: float = 0.0,
           prune: bool = True) -> ActiveModel:
    """Solution at fixed ``lam`` for response ``y`` (via the lambda path).

    Patterns sitting exactly on the boundary with a zero coefficient are dropped.
    """
    sub = data.with_response(y)
    try:
        res = lambda_path(sub, lam, max_order=max_order, alpha_ridge=alpha_ridge, prune=prune)
    except EmptyModelError:
        return ActiveModel.empty(data.n, lam, alpha_ridge)
    except InputError:
        if not np.any(sub.y):
            return ActiveModel.empty(data.n, lam, alpha_ridge)
        raise
    model = res.final
    keep = [i for i, bj in enumerate(model.beta) if bj != 0.0]
    if len(keep) < len(model):
        for i in reversed(range(len(model))):
            if i not in keep:
                model.remove(i)
    model.lam = lam
    model.refactor(param=lam)
    return model


def tau_path(
    data: Dataset,
    lam: float,
    b,
    q,
    tau_min: float,
    tau_max: float,
    *,
    max_order: int,
    alpha_ridge: float = 0.0,
    prune: bool = True,
    certify: bool = False,
    record_pruned: bool = False,
    max_kinks: int = 100_000,
) -> TauPathResult:
    """Follow the fixed-``lam`` solution of ``y(tau) = q + b * tau`` over ``[tau_min, tau_max]``."""
    if not lam > 0:
        raise InputError(f"lambda must be positive, got {lam}")
    if not tau_min < tau_max:
        raise InputError(f"need tau_min < tau_max, got [{tau_min}, {tau_max}]")
    b = np.asarray(b, dtype=float)
    q = np.asarray(q, dtype=float)
    if b.shape != (data.n,) or q.shape != (data.n,):
        raise InputError("b and q must have length n")

    model = fit_at(data, q + b * tau_min, lam, max_order=max_order,
                   alpha_ridge=alpha_ridge, prune=prune)
    tie_tol = TIE_REL * (tau_max - tau_min)
    tau = float(tau_min)
    taus = [tau]
    active_sets, signs, betas, directions = [], [], [], []
    kinks: list[Breakpoint] = []
    nodes: list[int] = []
    pruned_log: list = []
    reports: list = []
    kkt_tol = 1e-6 * lam

    while True:
        nu, _ = tau_directions(model, b)
        active_sets.append(tuple(model.patterns))
        signs.append(model.signs.copy())
        betas.append(model.beta.copy())
        directions.append(nu)
        step = tau_step(data, model, lam, tau, b=b, q=q, max_order=max_order, tau_max=tau_max,
                        prune=prune, tie_tol=tie_tol, record_pruned=record_pruned)
        nodes.append(step.nodes_visited)
        if step.pruned:
            pruned_log.append((tau, step.pruned))
        if step.event is None or len(kinks) >= max_kinks:
            taus.append(float(tau_max))
            break
        if len(model):
            model.beta = model.beta + step.delta * nu
        tau = tau + step.delta
        taus.append(tau)
        for event, pattern in apply_step(data, model, step, tau):
            kinks.append(Breakpoint(tau, event, pattern, model.beta.copy(),
                                    tuple(model.patterns), model.signs.copy(), step.nodes_visited))
        if certify:
            report = check_kkt(data, model, q + b * tau, lam, max_order=max_order)
            reports.append(report)
            if not report.ok(kkt_tol):
                raise ConsistencyError(f"optimality violated at tau={tau}: {report}")

    return TauPathResult(lam, np.array(taus), active_sets, signs, betas, directions, kinks,
                         nodes, reports, pruned_log)
