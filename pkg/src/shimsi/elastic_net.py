"""Elastic-net (L1 + ridge) variants of the path quantities.

The objective ``0.5 * ||y - X b||^2 + 0.5 * alpha_ridge * ||b||^2 + lam * ||b||_1``
is a lasso on the design stacked with ``sqrt(alpha_ridge) * I`` and the response
stacked with zeros.  The augmented rows are never built: they only add
``alpha_ridge`` to the active Gram diagonal and shift the active-pattern
correlations by ``-alpha_ridge * beta``.  ``alpha_ridge = 0`` is the lasso.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import InputError


@dataclass(frozen=True)
class ElNetConfig:
    alpha_ridge: float = 0.0

    def __post_init__(self):
        if not (self.alpha_ridge >= 0 and math.isfinite(self.alpha_ridge)):
            raise InputError(f"alpha_ridge must be finite and >= 0, got {self.alpha_ridge}")


def reference_stats(xw, xv, beta, nu, alpha_ridge: float = 0.0):
    """Ridge-corrected correlations of the active patterns.

    Returns ``rho_bar = X_A'w - alpha * beta`` and ``eta_bar = X_A'v + alpha * nu``.
    On the lambda path these equal ``s * lam`` and ``s``.
    """
    xw = np.asarray(xw, dtype=float)
    xv = np.asarray(xv, dtype=float)
    return xw - alpha_ridge * np.asarray(beta), xv + alpha_ridge * np.asarray(nu)


def lambda_prune_test(b_w: float, b_v: float, delta: float, rho_bar, eta_bar,
                      margin: float = 0.0) -> bool:
    """True when no descendant can enter within ``delta`` on the lambda path.

    Any descendant entering at step ``t <= delta`` would need
    ``lam - t <= b_w + t * b_v``, while every active reference k gives
    ``lam - t >= |rho_bar_k| - t * |eta_bar_k|``.
    """
    if not math.isfinite(delta):
        return False
    rhs = np.max(np.abs(rho_bar) - delta * np.abs(eta_bar)) if len(rho_bar) else -math.inf
    return b_w + delta * b_v < rhs - margin


def tau_prune_test(b_w: float, b_theta: float, b_v: float, delta: float, lam: float,
                   rho_bar, theta, eta_bar, margin: float = 0.0) -> bool:
    """Tau-path analogue; with no active pattern the right-hand side is ``lam``."""
    if not math.isfinite(delta):
        return False
    if len(rho_bar):
        rhs = np.max(np.abs(rho_bar) - delta * (np.abs(theta) + np.abs(eta_bar)))
    else:
        rhs = lam
    return b_w + delta * (b_theta + b_v) < rhs - margin


def elnet_pruning_tests(node_bounds, delta: float, k_stats, alpha_ridge: float = 0.0,
                        *, lam: float | None = None, margin: float = 0.0) -> bool:
    """Dispatch on the path kind.

    ``node_bounds`` is ``(b_w, b_v)`` for the lambda path or ``(b_w, b_theta, b_v)``
    for the tau path.  ``k_stats`` holds the raw active quantities
    ``(X_A'w, X_A'v, beta, nu)`` or ``(X_A'w, X_A'b, X_A'v, beta, nu)``.
    """
    if len(node_bounds) == 2:
        xw, xv, beta, nu = k_stats
        rho_bar, eta_bar = reference_stats(xw, xv, beta, nu, alpha_ridge)
        return lambda_prune_test(*node_bounds, delta, rho_bar, eta_bar, margin)
    xw, xb, xv, beta, nu = k_stats
    rho_bar, eta_bar = reference_stats(xw, xv, beta, nu, alpha_ridge)
    b_w, b_theta, b_v = node_bounds
    return tau_prune_test(b_w, b_theta, b_v, delta, lam, rho_bar, xb, eta_bar, margin)


def elnet_directions(active, rhs_vector=None, alpha_ridge: float | None = None, *, b=None):
    """Segment direction with the ridge-shifted Gram.

    With ``b`` given this is the tau-path direction ``(X_A'X_A + alpha I)^{-1} X_A'b``;
    otherwise the lambda-path direction against the sign vector.
    """
    if alpha_ridge is not None and alpha_ridge != active.alpha_ridge:
        active = active.copy()
        active.alpha_ridge = float(alpha_ridge)
        active.gram_factor = None
    if b is not None:
        return active.solve(active.columns.T @ np.asarray(b, dtype=float))
    return active.solve(active.signs if rhs_vector is None else rhs_vector)


def elnet_lambda_inclusion_step(data, active, alpha_ridge: float | None = None, *,
                                max_order: int, prune: bool = True):
    """``(delta, pattern)`` of the next inclusion, ignoring deletions and the target."""
    from .lasso_path import LambdaStepRule

    from .patterns import branch_and_bound_min_step

    if alpha_ridge is not None and alpha_ridge != active.alpha_ridge:
        active = active.copy()
        active.alpha_ridge = float(alpha_ridge)
        active.gram_factor = None
    if not len(active):
        raise InputError("active set must be nonempty")
    nu = active.solve(active.signs)
    w = data.y - active.fitted()
    v = active.columns @ nu
    rule = LambdaStepRule(active, w, v, nu)
    res = branch_and_bound_min_step(
        data, max_order, np.vstack([w, v]), rule.candidate, rule.prune, prune=prune,
        tie_tol=1e-12 * active.lam,
    )
    return res.value, res.argmin


def elnet_lambda_path(data, lam_target=None, config: ElNetConfig | None = None, **kwargs):
    from .lasso_path import lambda_path

    config = config or ElNetConfig()
    return lambda_path(data, lam_target, alpha_ridge=config.alpha_ridge, **kwargs)


def elnet_tau_path(data, lam, b, q, tau_min, tau_max, config: ElNetConfig | None = None,
                   **kwargs):
    from .tau_path import tau_path

    config = config or ElNetConfig()
    return tau_path(data, lam, b, q, tau_min, tau_max, alpha_ridge=config.alpha_ridge, **kwargs)
