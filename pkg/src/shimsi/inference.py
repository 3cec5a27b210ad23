"""Selective inference for the coefficients of a fitted interaction model.

For a selected pattern j the statistic is the least-squares coefficient
``eta' y`` on the selected design.  Conditioning on the nuisance part ``q``
leaves a one-dimensional line ``y(tau) = q + b * tau``; the selection event
cuts out the truncation region on that line, and the statistic is a
truncated normal on it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq
from scipy.special import log_ndtr, logsumexp, ndtri

from .errors import ConsistencyError, DegeneracyError, InputError, NumericalDegeneracyError, ShimError
from .lasso_path import COND_LIMIT, ActiveModel
from .patterns import Dataset, Pattern

TAU_WIDTH = 20.0
CI_WIDTH = 30.0


@dataclass(frozen=True)
class TestTarget:
    j: int
    eta: np.ndarray
    sigma_eta2: float
    stat_obs: float

    @property
    def sigma_eta(self) -> float:
        return math.sqrt(self.sigma_eta2)


@dataclass(frozen=True)
class NuisancePair:
    b: np.ndarray
    q: np.ndarray


@dataclass(frozen=True)
class TruncationRegion:
    """Sorted, disjoint union of closed intervals on the tau line."""

    intervals: tuple[tuple[float, float], ...]

    def __post_init__(self):
        iv = tuple((float(lo), float(hi)) for lo, hi in self.intervals)
        if not iv:
            raise InputError("truncation region must be nonempty")
        for lo, hi in iv:
            if not lo < hi:
                raise InputError(f"empty interval ({lo}, {hi}) in region")
        for (_, h1), (l2, _) in zip(iv, iv[1:]):
            if not h1 < l2:
                raise InputError("region intervals must be sorted and disjoint")
        object.__setattr__(self, "intervals", iv)

    @classmethod
    def real_line(cls) -> "TruncationRegion":
        return cls(((-math.inf, math.inf),))

    @classmethod
    def from_pieces(cls, pieces, tol: float = 0.0) -> "TruncationRegion":
        """Merge possibly overlapping or touching pieces; drop empty ones."""
        merged: list[list[float]] = []
        for lo, hi in sorted(pieces):
            if not hi > lo:
                continue
            if merged and lo <= merged[-1][1] + tol:
                merged[-1][1] = max(merged[-1][1], hi)
            else:
                merged.append([lo, hi])
        return cls(tuple((lo, hi) for lo, hi in merged))

    def contains(self, x: float, tol: float = 0.0) -> bool:
        return any(lo - tol <= x <= hi + tol for lo, hi in self.intervals)

    def covers(self, other: "TruncationRegion", tol: float = 0.0) -> bool:
        return all(
            any(lo - tol <= a and b <= hi + tol for lo, hi in self.intervals)
            for a, b in other.intervals
        )

    def as_list(self) -> list[list[float]]:
        return [[lo, hi] for lo, hi in self.intervals]


@dataclass
class InferenceResult:
    pattern: Pattern
    beta_hat: float
    stat: float
    sigma_eta: float
    p_selective: float
    ci: tuple[float, float]
    region: TruncationRegion | None
    diagnostics: dict = field(default_factory=dict)


def test_direction(j: int, X_A, sigma2: float = 1.0, y=None) -> TestTarget:
    """Direction whose inner product with ``y`` is the j-th least-squares coefficient."""
    X_A = np.asarray(X_A, dtype=float)
    if X_A.ndim == 1:
        X_A = X_A[:, None]
    k = X_A.shape[1]
    if not 0 <= j < k:
        raise InputError(f"index {j} outside the {k} selected patterns")
    G = X_A.T @ X_A
    if np.linalg.cond(G) > COND_LIMIT:
        raise DegeneracyError("selected design has a singular Gram matrix")
    e = np.zeros(k)
    e[j] = 1.0
    eta = X_A @ np.linalg.solve(G, e)
    stat = float(eta @ np.asarray(y, dtype=float)) if y is not None else math.nan
    return TestTarget(j, eta, float(sigma2 * (eta @ eta)), stat)


def nuisance_decomposition(y, eta, sigma2: float = 1.0) -> NuisancePair:
    """``b = Sigma eta / eta' Sigma eta`` and ``q = y - b eta'y`` with ``Sigma = sigma2 I``."""
    y = np.asarray(y, dtype=float)
    eta = np.asarray(eta, dtype=float)
    ss = float(eta @ eta)
    if not ss > 0:
        raise InputError("eta must be nonzero")
    b = eta / ss
    return NuisancePair(b, y - b * float(eta @ y))


def truncation_region(path, A_obs, stat_obs: float | None = None, *,
                      tol: float = 1e-9) -> TruncationRegion:
    """Union of tau segments whose active set equals ``A_obs`` (signs ignored)."""
    target = frozenset(A_obs)
    pieces = [(lo, hi) for lo, hi, act in path.segments() if frozenset(act) == target]
    scale = tol * max(1.0, path.tau_max - path.tau_min)
    if not pieces:
        raise ConsistencyError("no tau segment reproduces the observed active set")
    region = TruncationRegion.from_pieces(pieces, tol=scale)
    if stat_obs is not None and not region.contains(stat_obs, scale):
        raise ConsistencyError(f"observed statistic {stat_obs} lies outside the truncation region")
    return region


def _log_interval_mass(a, b):
    """``log(Phi(b) - Phi(a))`` elementwise for standardized ``a <= b``."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    out = np.full(np.broadcast(a, b).shape, -np.inf)
    upper = a > 0
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        # right tail: mirror so both logs refer to small lower-tail masses
        la, lb = np.where(upper, log_ndtr(-b), log_ndtr(a)), np.where(upper, log_ndtr(-a), log_ndtr(b))
        diff = la - lb
        val = lb + np.log1p(-np.exp(diff))
    ok = b > a
    out[ok] = val[ok]
    return out


def _tail_logs(x: float, mu: float, sigma2: float, region: TruncationRegion):
    """Log masses of the region below ``x``, above ``x`` and in total."""
    s = math.sqrt(sigma2)
    lo = np.array([iv[0] for iv in region.intervals])
    hi = np.array([iv[1] for iv in region.intervals])
    zl, zh, zx = (lo - mu) / s, (hi - mu) / s, (x - mu) / s
    total = logsumexp(_log_interval_mass(zl, zh))
    below = logsumexp(_log_interval_mass(zl, np.minimum(zh, zx)))
    above = logsumexp(_log_interval_mass(np.maximum(zl, zx), zh))
    if not np.isfinite(total):
        raise NumericalDegeneracyError(
            f"truncation region has no normal mass under mean {mu} and variance {sigma2}"
        )
    return below, above, total


def truncated_normal_cdf(x: float, mu: float, sigma2: float, region: TruncationRegion) -> float:
    if not sigma2 > 0:
        raise InputError("sigma2 must be positive")
    below, _, total = _tail_logs(x, mu, sigma2, region)
    return float(min(1.0, math.exp(below - total)))


def truncated_normal_sf(x: float, mu: float, sigma2: float, region: TruncationRegion) -> float:
    if not sigma2 > 0:
        raise InputError("sigma2 must be positive")
    _, above, total = _tail_logs(x, mu, sigma2, region)
    return float(min(1.0, math.exp(above - total)))


def selective_p_value(target: TestTarget, region: TruncationRegion, mu: float = 0.0) -> float:
    """Two-sided ``2 * min(pi, 1 - pi)`` with ``pi`` the upper tail at the observed statistic."""
    below, above, total = _tail_logs(target.stat_obs, mu, target.sigma_eta2, region)
    tail = min(below, above) - total
    return float(min(1.0, 2.0 * math.exp(tail)))


def selective_ci(target: TestTarget, region: TruncationRegion, alpha_sig: float = 0.05,
                 *, width: float = CI_WIDTH) -> tuple[float, float]:
    """Invert the truncated-normal CDF in its mean.

    The CDF at the observed statistic decreases in the mean; ``lo`` puts
    ``alpha_sig / 2`` of the conditional mass above the statistic and ``hi``
    puts ``alpha_sig / 2`` below it.  Both root searches run on log tail
    ratios inside ``stat +- width * sigma_eta``.
    """
    if not 0 < alpha_sig < 1:
        raise InputError("alpha_sig must lie in (0, 1)")
    return (selective_ci_limit(target, region, alpha_sig, "lower", width=width),
            selective_ci_limit(target, region, alpha_sig, "upper", width=width))


def selective_ci_limit(target: TestTarget, region: TruncationRegion, alpha_sig: float,
                       which: str, *, width: float = CI_WIDTH) -> float:
    x, s2, s = target.stat_obs, target.sigma_eta2, target.sigma_eta
    log_half = math.log(alpha_sig / 2)
    idx = 1 if which == "lower" else 0

    def gap(mu):
        parts = _tail_logs(x, mu, s2, region)
        return parts[idx] - parts[2] - log_half

    return _root(gap, x - width * s, x + width * s, which)


def _root(f, a: float, b: float, which: str) -> float:
    fa, fb = f(a), f(b)
    if not (np.isfinite(fa) and np.isfinite(fb)) or fa * fb > 0:
        raise NumericalDegeneracyError(f"cannot bracket the {which} confidence limit in [{a}, {b}]")
    return float(brentq(f, a, b, xtol=1e-12 * max(1.0, abs(a) + abs(b)), rtol=1e-15, maxiter=500))


def z_interval(stat: float, sigma: float, alpha_sig: float) -> tuple[float, float]:
    z = float(ndtri(1 - alpha_sig / 2))
    return stat - z * sigma, stat + z * sigma


def estimate_sigma2(data: Dataset, fitted: ActiveModel) -> float:
    """Residual variance of the least-squares refit on the selected patterns."""
    k = len(fitted)
    if data.n - k < 1:
        raise InputError("not enough rows to estimate the noise variance")
    if k:
        coef, *_ = np.linalg.lstsq(fitted.columns, data.y, rcond=None)
        r = data.y - fitted.columns @ coef
    else:
        r = data.y
    return float(r @ r / (data.n - k))


def _selected(fitted: ActiveModel) -> ActiveModel:
    model = fitted.copy()
    for i in reversed(range(len(model))):
        if model.beta[i] == 0.0:
            model.remove(i)
    model.refactor()
    return model


def _region_for(method, data, lam, model, target, pair, *, max_order, alpha_ridge, prune,
                tau_width):
    from .baselines import polytope_interval
    from .tau_path import tau_path

    lo = target.stat_obs - tau_width * target.sigma_eta
    hi = target.stat_obs + tau_width * target.sigma_eta
    if method == "homo":
        path = tau_path(data, lam, pair.b, pair.q, lo, hi, max_order=max_order,
                        alpha_ridge=alpha_ridge, prune=prune)
        region = truncation_region(path, model.patterns, target.stat_obs)
        diag = {"kinks": len(path.kinks), "nodes_visited": int(sum(path.nodes_visited))}
        return region, diag
    if method == "poly":
        iv = polytope_interval(data, lam, model, target, pair=pair, max_order=max_order,
                               prune=prune, tau_range=(lo, hi))
        return TruncationRegion((iv.interval,)), {"kinks": 0, "nodes_visited": iv.nodes_visited}
    raise InputError(f"unknown method {method!r}")


def infer_all(
    data: Dataset,
    lam: float,
    fitted: ActiveModel,
    alpha_sig: float = 0.05,
    method: str = "homo",
    *,
    max_order: int,
    sigma2: float | None = None,
    alpha_ridge: float | None = None,
    prune: bool = True,
    tau_width: float = TAU_WIDTH,
    split_seed: int = 0,
) -> list[InferenceResult]:
    """One result per selected pattern, in the fitted model's order.

    ``method`` is ``homo`` (full truncation region), ``poly`` (sign-conditioned
    interval) or ``ds`` (data splitting, which refits on half of the rows).
    A failure for one pattern is stored in its ``diagnostics["error"]``.
    """
    if method == "ds":
        from .baselines import data_split_inference

        return data_split_inference(data, lam, split_seed, alpha_sig, max_order=max_order,
                                    sigma2=sigma2)
    if method not in ("homo", "poly"):
        raise InputError(f"unknown method {method!r}")
    if not 0 < alpha_sig < 1:
        raise InputError("alpha_sig must lie in (0, 1)")
    sigma2 = data.sigma2 if sigma2 is None else float(sigma2)
    alpha_ridge = fitted.alpha_ridge if alpha_ridge is None else alpha_ridge
    model = _selected(fitted)
    model.lam = lam
    results = []
    for j, pattern in enumerate(model.patterns):
        target = test_direction(j, model.columns, sigma2, data.y)
        pair = nuisance_decomposition(data.y, target.eta, sigma2)
        res = InferenceResult(pattern, float(model.beta[j]), target.stat_obs, target.sigma_eta,
                              math.nan, (math.nan, math.nan), None)
        try:
            region, diag = _region_for(method, data, lam, model, target, pair,
                                       max_order=max_order, alpha_ridge=alpha_ridge,
                                       prune=prune, tau_width=tau_width)
            res.region = region
            res.diagnostics.update(diag)
            res.p_selective = selective_p_value(target, region)
            res.ci = _ci_with_fallback(target, region, alpha_sig, res.diagnostics)
        except ShimError as exc:
            res.diagnostics["error"] = f"{type(exc).__name__}: {exc}"
        results.append(res)
    return results


def _ci_with_fallback(target, region, alpha_sig, diagnostics) -> tuple[float, float]:
    """Selective CI; a limit that cannot be bracketed is reported as infinite."""
    limits = []
    for which, fallback in (("lower", -math.inf), ("upper", math.inf)):
        try:
            limits.append(selective_ci_limit(target, region, alpha_sig, which))
        except NumericalDegeneracyError:
            limits.append(fallback)
            diagnostics["ci_unbounded"] = True
    return limits[0], limits[1]
