"""Implicit interaction-pattern tree.

A pattern is a strictly increasing tuple of 1-based covariate indices.  Its
feature column is the elementwise product of the member columns of ``Z``.
Because every entry of ``Z`` lies in ``[0, 1]``, a child column is dominated
elementwise by its parent column, which is what makes the subtree bounds in
:func:`bound_triple` valid for all descendants.

The tree is never materialized.  :func:`branch_and_bound_min_step` walks it
depth first in lexicographic order, synthesizing columns along the current
spine only, and lets the caller supply the per-node step rule and the
subtree pruning rule.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Iterator, Sequence

import numpy as np

from .errors import InputError

Pattern = tuple[int, ...]


@dataclass(frozen=True)
class Dataset:
    """Covariates ``Z`` (n x m, entries in [0, 1]), response ``y`` and noise variance."""

    Z: np.ndarray
    y: np.ndarray
    sigma2: float = 1.0
    names: tuple[str, ...] | None = None

    def __post_init__(self):
        Z = np.array(self.Z, dtype=float, copy=True)
        y = np.array(self.y, dtype=float, copy=True).ravel()
        if Z.ndim != 2:
            raise InputError(f"Z must be two-dimensional, got shape {Z.shape}")
        n, m = Z.shape
        if n < 2 or m < 1:
            raise InputError(f"need n >= 2 and m >= 1, got n={n}, m={m}")
        if y.shape[0] != n:
            raise InputError(f"y has length {y.shape[0]} but Z has {n} rows")
        if not np.all(np.isfinite(Z)) or not np.all(np.isfinite(y)):
            raise InputError("Z and y must be finite")
        if Z.min() < 0.0 or Z.max() > 1.0:
            bad = np.argwhere((Z < 0.0) | (Z > 1.0))[0]
            raise InputError(
                f"Z entries must lie in [0, 1]; Z[{bad[0]}, {bad[1]}] = {Z[bad[0], bad[1]]}"
            )
        if not (self.sigma2 > 0 and math.isfinite(self.sigma2)):
            raise InputError(f"sigma2 must be positive, got {self.sigma2}")
        if self.names is not None and len(self.names) != m:
            raise InputError(f"expected {m} names, got {len(self.names)}")
        Z.setflags(write=False)
        y.setflags(write=False)
        object.__setattr__(self, "Z", Z)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "sigma2", float(self.sigma2))
        if self.names is not None:
            object.__setattr__(self, "names", tuple(str(s) for s in self.names))

    @property
    def n(self) -> int:
        return self.Z.shape[0]

    @property
    def m(self) -> int:
        return self.Z.shape[1]

    def with_response(self, y) -> "Dataset":
        return Dataset(self.Z, y, self.sigma2, self.names)

    def subset(self, rows) -> "Dataset":
        rows = np.asarray(rows)
        return Dataset(self.Z[rows], self.y[rows], self.sigma2, self.names)

    def label(self, pattern: Pattern) -> str:
        if self.names is None:
            return "*".join(f"z{j}" for j in pattern)
        return "*".join(self.names[j - 1] for j in pattern)


@dataclass(frozen=True)
class FeatureColumn:
    pattern: Pattern
    values: np.ndarray


@dataclass(frozen=True)
class BoundTriple:
    b_w: float
    b_v: float
    b_theta: float


def validate_pattern(pattern: Sequence[int], m: int, max_order: int | None = None) -> Pattern:
    pattern = tuple(int(j) for j in pattern)
    if not pattern:
        raise InputError("pattern must be non-empty")
    if any(b <= a for a, b in zip(pattern, pattern[1:])):
        raise InputError(f"pattern indices must be strictly increasing: {pattern}")
    if pattern[0] < 1 or pattern[-1] > m:
        raise InputError(f"pattern {pattern} has an index outside [1, {m}]")
    if max_order is not None and len(pattern) > max_order:
        raise InputError(f"pattern {pattern} exceeds maximum order {max_order}")
    return pattern


def feature_vector(pattern: Sequence[int], data: Dataset) -> FeatureColumn:
    pattern = validate_pattern(pattern, data.m)
    idx = [j - 1 for j in pattern]
    return FeatureColumn(pattern, np.prod(data.Z[:, idx], axis=1))


def feature_matrix(patterns: Sequence[Pattern], data: Dataset) -> np.ndarray:
    if not patterns:
        return np.zeros((data.n, 0))
    return np.column_stack([feature_vector(p, data).values for p in patterns])


def children(pattern: Sequence[int], m: int, d: int) -> list[Pattern]:
    """Canonical extensions: append one index larger than the current maximum."""
    pattern = tuple(pattern)
    if len(pattern) >= d:
        return []
    start = pattern[-1] + 1 if pattern else 1
    return [pattern + (j,) for j in range(start, m + 1)]


def tree_size(m: int, d: int) -> int:
    return sum(math.comb(m, k) for k in range(1, min(d, m) + 1))


def iter_patterns(m: int, d: int) -> Iterator[Pattern]:
    """All patterns of order <= d in depth-first (lexicographic) order."""
    stack = list(reversed(children((), m, d)))
    while stack:
        p = stack.pop()
        yield p
        stack.extend(reversed(children(p, m, d)))


def _pos_neg(x: np.ndarray, u: np.ndarray) -> tuple[float, float]:
    return float(x @ np.clip(u, 0.0, None)), float(x @ np.clip(-u, 0.0, None))


def bound_triple(x, w, v, b) -> BoundTriple:
    """Subtree bounds on ``|x'w|``, ``|x'v|`` and ``|x'b|`` for any descendant of ``x``.

    For a nonnegative column the positive and negative parts of ``u`` can only
    shrink as ``x`` shrinks, so ``max(sum_{u>0} |u| x, sum_{u<0} |u| x)``
    dominates ``|x'u|`` at this node and every node below it.
    """
    x = x.values if isinstance(x, FeatureColumn) else np.asarray(x, dtype=float)
    vecs = [np.asarray(a, dtype=float) for a in (w, v, b)]
    if any(a.shape != x.shape for a in vecs):
        raise InputError("bound_triple: all vectors must have the column's length")
    return BoundTriple(*(max(_pos_neg(x, a)) for a in vecs))


class Node:
    """One visited tree node: its sparse column plus inner products and bounds.

    ``dots[i]`` is the inner product of the column with the i-th weight vector
    and ``bounds[i]`` the matching subtree bound.
    """

    __slots__ = ("pattern", "rows", "vals", "dots", "bounds")

    def __init__(self, pattern, rows, vals, dots, bounds):
        self.pattern = pattern
        self.rows = rows
        self.vals = vals
        self.dots = dots
        self.bounds = bounds

    def dense(self, n: int) -> np.ndarray:
        x = np.zeros(n)
        x[self.rows] = self.vals
        return x


@dataclass
class SearchResult:
    value: float
    argmin: Pattern | None
    nodes_visited: int
    pruned: list[tuple[Pattern, float]] | None = None


StepRule = Callable[[Node], float]
PruneRule = Callable[[Node, float], bool]


def branch_and_bound_min_step(
    data: Dataset,
    max_order: int,
    weights,
    candidate_step: StepRule,
    prune_test: PruneRule,
    *,
    prune: bool = True,
    initial: float = math.inf,
    tie_tol: float = 0.0,
    record_pruned: bool = False,
) -> SearchResult:
    """Exact minimum of ``candidate_step`` over every pattern of order <= ``max_order``.

    ``weights`` is a (k, n) array; each visited node gets ``dots`` and
    ``bounds`` against those k vectors.  A candidate replaces the running
    minimum only when it is smaller by more than ``tie_tol``, so among ties the
    lexicographically first pattern wins.  ``initial`` seeds the running
    minimum (a competing event, or the end of the parameter range); the
    returned ``argmin`` is ``None`` when nothing beats it.

    With ``prune=True`` two rules cut subtrees: an all-zero column (every
    descendant is zero too) and ``prune_test(node, running_min)``.  With
    ``prune=False`` every pattern is evaluated, which is the exhaustive
    reference.
    """
    Z = data.Z
    n, m = Z.shape
    W = np.atleast_2d(np.asarray(weights, dtype=float))
    if W.shape[1] != n:
        raise InputError(f"weights must have {n} columns, got {W.shape}")
    k = W.shape[0]
    WW = np.vstack([np.clip(W, 0.0, None), np.clip(-W, 0.0, None)])
    d = min(max_order, m)

    best = initial
    arg: Pattern | None = None
    visited = 0
    pruned: list[tuple[Pattern, float]] | None = [] if record_pruned else None

    def expand(pattern: Pattern, rows: np.ndarray, vals: np.ndarray, start: int) -> None:
        nonlocal best, arg, visited
        Zr = Z[rows, start:]
        if prune:
            if rows.size == 0:
                return
            cols = np.flatnonzero(Zr.any(axis=0))
            Zr = Zr[:, cols]
        else:
            cols = np.arange(m - start)
        if cols.size == 0:
            return
        # all children of this node at once; child i keeps the parent's rows
        V = vals[:, None] * Zr
        PN = WW[:, rows] @ V
        pos, neg = PN[:k], PN[k:]
        dots = (pos - neg).T.tolist()
        bounds = np.maximum(pos, neg).T.tolist()
        deeper = len(pattern) + 1 < d
        visited += cols.size
        for i, j in enumerate((cols + start).tolist()):
            child = pattern + (j + 1,)
            node = Node(child, rows, V[:, i], dots[i], bounds[i])
            step = candidate_step(node)
            if step < best - tie_tol:
                best = step
                arg = child
            if not deeper or j + 1 >= m:
                continue
            col = V[:, i]
            if not prune:
                expand(child, rows, col, j + 1)
                continue
            nz = col != 0.0
            if not nz.any():
                continue
            if prune_test(node, best):
                if pruned is not None:
                    pruned.append((child, best))
                continue
            expand(child, rows[nz], col[nz], j + 1)

    expand((), np.arange(n), np.ones(n), 0)
    return SearchResult(best, arg, visited, pruned)


def branch_and_bound_max_abs(
    data: Dataset,
    max_order: int,
    w,
    *,
    exclude=frozenset(),
    prune: bool = True,
    tie_tol: float = 0.0,
) -> SearchResult:
    """Maximize ``|x_l' w|`` over the tree (``value`` is the maximum, not negated)."""
    exclude = frozenset(exclude)

    def step(node: Node) -> float:
        if node.pattern in exclude:
            return math.inf
        return -abs(node.dots[0])

    def prune_test(node: Node, best: float) -> bool:
        return node.bounds[0] <= -best

    res = branch_and_bound_min_step(
        data, max_order, np.asarray(w, dtype=float)[None, :], step, prune_test,
        prune=prune, tie_tol=tie_tol,
    )
    value = -res.value if res.argmin is not None else 0.0
    return SearchResult(value, res.argmin, res.nodes_visited)


def exhaustive_subtree_min(
    data: Dataset, max_order: int, root: Pattern, weights, candidate_step: StepRule
) -> float:
    """Minimum of ``candidate_step`` over ``root`` and all its descendants (no pruning)."""
    Z = data.Z
    W = np.atleast_2d(np.asarray(weights, dtype=float))
    Wp = np.clip(W, 0.0, None)
    Wn = np.clip(-W, 0.0, None)
    best = math.inf
    stack = [root]
    while stack:
        p = stack.pop()
        x = np.prod(Z[:, [j - 1 for j in p]], axis=1)
        rows = np.flatnonzero(x)
        vals = x[rows]
        pos = Wp[:, rows] @ vals
        neg = Wn[:, rows] @ vals
        node = Node(p, rows, vals, (pos - neg).tolist(), np.maximum(pos, neg).tolist())
        best = min(best, candidate_step(node))
        stack.extend(children(p, data.m, max_order))
    return best
