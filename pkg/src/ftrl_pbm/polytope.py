"""Geometry of the truncated Birkhoff polytope Conv(X).

Linear minimization (a min-cost assignment), positive-support matchings,
doubly stochastic completion and the Bregman divergence of the shifted
1/2-Tsallis potential.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.optimize import linear_sum_assignment

from . import _kernels
from .core import Action, DimensionError, ProblemDims

TAU_SUPP = 1e-12


class NoPerfectMatchingError(RuntimeError):
    """The positive support of a matrix admits no perfect matching."""


def _assignment_value(r: np.ndarray, items) -> float:
    return float(r[list(items), np.arange(r.shape[1])].sum())


def linmin(r: np.ndarray, dims: ProblemDims, tie_break: bool = True) -> Action:
    """Action minimizing ``<X, r>`` over all ranked lists.

    Parameters
    ----------
    r : ndarray of shape (n, m)
        Linear cost, finite.
    dims : ProblemDims
    tie_break : bool, default=True
        If True, among (numerically) optimal actions return the one whose
        item sequence is lexicographically smallest. This costs up to
        ``n*m`` extra assignment solves; the solver's inner loop turns it off.

    Returns
    -------
    Action
    """
    r = np.asarray(r, dtype=float)
    if r.shape != dims.shape:
        raise DimensionError(f"cost shape {r.shape} != {dims.shape}")
    if not np.all(np.isfinite(r)):
        raise ValueError("cost matrix must be finite")
    # rectangular assignment: positions (rows of r.T) to distinct items
    pos, items = linear_sum_assignment(r.T)
    best = np.empty(dims.m, dtype=np.int64)
    best[pos] = items
    if not tie_break:
        return Action(tuple(best))
    v_star = _assignment_value(r, best)
    tol = 1e-12 * (1.0 + np.abs(r).max() * dims.m)
    fixed: list[int] = []
    big = np.abs(r).max() * (dims.m + 1) + 1.0
    for j in range(dims.m):
        for i in range(dims.n):
            if i in fixed:
                continue
            # best completion with items fixed at positions 0..j
            trial = fixed + [i]
            cost = _assignment_value(r[:, : j + 1], trial)
            if j + 1 < dims.m:
                rest = r[:, j + 1 :].copy()
                rest[trial, :] = big
                p2, i2 = linear_sum_assignment(rest.T)
                cost += float(rest[i2, p2].sum())
            if cost <= v_star + tol:
                fixed.append(i)
                break
        else:  # pragma: no cover - the optimum itself always qualifies
            return Action(tuple(best))
    return Action(tuple(fixed))


def positive_support_matching(W: np.ndarray, supp_tol: float = TAU_SUPP) -> np.ndarray:
    """Permutation ``pi`` with ``W[i, pi[i]] > supp_tol`` for every row.

    Augmenting paths are explored in index order, so the result is
    deterministic (the identity wins whenever it is supported).
    """
    W = np.ascontiguousarray(W, dtype=float)
    if W.ndim != 2 or W.shape[0] != W.shape[1]:
        raise DimensionError(f"expected a square matrix, got shape {W.shape}")
    perm, ok = _kernels.perfect_matching(W, float(supp_tol))
    if not ok:
        raise NoPerfectMatchingError(
            "no perfect matching on the positive support; lower the support "
            "threshold or renormalize the matrix"
        )
    return perm


def complete_to_doubly_stochastic(x: np.ndarray, dims: ProblemDims) -> np.ndarray:
    """Pad a feasible allocation to an ``(n, n)`` doubly stochastic matrix.

    The extra ``n - m`` columns share each row's slack equally. Slightly
    negative slack from solver round-off is clipped to zero.
    """
    x = np.asarray(x, dtype=float)
    if x.shape != dims.shape:
        raise DimensionError(f"allocation shape {x.shape} != {dims.shape}")
    n, m = dims.shape
    if m == n:
        return x.copy()
    W = np.empty((n, n))
    W[:, :m] = x
    slack = np.maximum(1.0 - x.sum(axis=1), 0.0) / (n - m)
    W[:, m:] = slack[:, None]
    return W


@dataclass(frozen=True)
class Potential:
    """A separable convex potential given by its value and gradient."""

    value: Callable[[np.ndarray], float]
    grad: Callable[[np.ndarray], np.ndarray]
    name: str = "custom"


def _tsallis_value(x):
    return float(np.sum(x) - np.sum(np.sqrt(x)))


def _tsallis_grad(x):
    return 1.0 - 0.5 / np.sqrt(x)


# f(x) = <x, 1> + Psi(x) with Psi(x) = -sum sqrt(x)
SHIFTED_TSALLIS = Potential(_tsallis_value, _tsallis_grad, "shifted_tsallis")


def bregman_divergence(x, y, potential: Potential = SHIFTED_TSALLIS) -> float:
    """``D_f(x, y) = f(x) - f(y) - <grad f(y), x - y>``.

    ``x`` must be entrywise nonnegative and ``y`` strictly positive.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape:
        raise DimensionError(f"shape mismatch {x.shape} vs {y.shape}")
    if np.any(x < 0):
        raise ValueError("x has a negative entry")
    if np.any(y <= 0):
        raise ValueError("y must be strictly positive")
    d = potential.value(x) - potential.value(y) - float(np.sum(potential.grad(y) * (x - y)))
    return max(d, 0.0) if d > -1e-15 * (1.0 + abs(potential.value(x))) else d
