"""Reference inference methods: sign-conditioned polytope and data splitting."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import ndtr

from .errors import ConsistencyError, EmptyModelError, InputError
from .inference import (
    TAU_WIDTH,
    InferenceResult,
    NuisancePair,
    TestTarget,
    TruncationRegion,
    nuisance_decomposition,
    z_interval,
)
from .lasso_path import COND_LIMIT, TIE_REL, ActiveModel, lambda_path
from .patterns import Dataset, feature_matrix
from .tau_path import tau_step


@dataclass(frozen=True)
class PolytopeInterval:
    interval: tuple[float, float]
    nodes_visited: int = 0


def polytope_interval(
    data: Dataset,
    lam: float,
    fitted: ActiveModel,
    target: TestTarget,
    *,
    max_order: int,
    pair: NuisancePair | None = None,
    prune: bool = True,
    tau_range: tuple[float, float] | None = None,
) -> PolytopeInterval:
    """Largest interval around the observed statistic keeping the active set and signs.

    Moving ``tau`` from the observed value, the fitted model stays optimal with
    fixed signs until a coefficient hits zero or an inactive correlation hits
    ``+-lam``; both directions are found with the tau-step search, the
    backward one by reflecting ``b``.
    """
    if pair is None:
        pair = nuisance_decomposition(data.y, target.eta)
    if tau_range is None:
        w = TAU_WIDTH * target.sigma_eta
        tau_range = (target.stat_obs - w, target.stat_obs + w)
    lo_lim, hi_lim = tau_range
    t0 = target.stat_obs
    tie = TIE_REL * (hi_lim - lo_lim)
    model = fitted.copy()
    model.lam = lam
    fwd = tau_step(data, model, lam, t0, b=pair.b, q=pair.q, max_order=max_order,
                   tau_max=hi_lim, prune=prune, tie_tol=tie)
    back = tau_step(data, model.copy(), lam, -t0, b=-pair.b, q=pair.q, max_order=max_order,
                    tau_max=-lo_lim, prune=prune, tie_tol=tie)
    lo, hi = t0 - back.delta, t0 + fwd.delta
    if not lo < hi:
        raise ConsistencyError(f"sign-conditioned interval around {t0} is empty")
    return PolytopeInterval((lo, hi), fwd.nodes_visited + back.nodes_visited)


def split_rows(n: int, split_seed: int) -> tuple[np.ndarray, np.ndarray]:
    """Seeded 50/50 split; the selection half gets the extra row when ``n`` is odd."""
    perm = np.random.default_rng(split_seed).permutation(n)
    k = (n + 1) // 2
    return np.sort(perm[:k]), np.sort(perm[k:])


def data_split_inference(
    data: Dataset,
    lam: float,
    split_seed: int,
    alpha_sig: float = 0.05,
    *,
    max_order: int,
    sigma2: float | None = None,
    lam_select: float | None = None,
) -> list[InferenceResult]:
    """Select on one half, then classical z-tests and z-intervals on the other.

    ``lam_select`` overrides the penalty used on the selection half.
    """
    if data.n < 4:
        raise InputError("data splitting needs n >= 4")
    sigma2 = data.sigma2 if sigma2 is None else float(sigma2)
    sel_rows, inf_rows = split_rows(data.n, split_seed)
    sel, held = data.subset(sel_rows), data.subset(inf_rows)
    lam_sel = lam if lam_select is None else lam_select
    try:
        fit = lambda_path(sel, lam_sel, max_order=max_order).final
    except EmptyModelError:
        return []
    except InputError:
        if not np.any(sel.y):
            return []
        raise
    patterns = [p for p, bj in zip(fit.patterns, fit.beta) if bj != 0.0]
    betas = [bj for bj in fit.beta if bj != 0.0]
    if not patterns:
        return []
    X = feature_matrix(patterns, held)
    G = X.T @ X
    results = []
    singular = np.linalg.cond(G) > COND_LIMIT
    if not singular:
        Ginv = np.linalg.inv(G)
        coef = Ginv @ (X.T @ held.y)
    for j, p in enumerate(patterns):
        if singular:
            results.append(InferenceResult(
                p, float(betas[j]), math.nan, math.nan, math.nan, (math.nan, math.nan), None,
                {"error": "DegeneracyError: selected design is singular on the held-out half"},
            ))
            continue
        se = math.sqrt(sigma2 * Ginv[j, j])
        z = coef[j] / se
        p_val = float(min(1.0, 2.0 * ndtr(-abs(z))))
        results.append(InferenceResult(
            p, float(betas[j]), float(coef[j]), se, p_val, z_interval(float(coef[j]), se, alpha_sig),
            TruncationRegion.real_line(), {"kinks": 0, "nodes_visited": 0},
        ))
    return results
