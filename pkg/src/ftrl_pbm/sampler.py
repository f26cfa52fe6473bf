"""Sampling a ranked list whose expected matrix equals a given allocation.

The allocation is padded to a doubly stochastic matrix, written as a convex
combination of permutation matrices (greedy Birkhoff decomposition), and one
permutation is drawn; its first ``m`` columns form the action.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernels
from .core import Action, DimensionError, ProblemDims
from .polytope import TAU_SUPP, NoPerfectMatchingError, complete_to_doubly_stochastic

TAU_RESIDUAL = 1e-9
# residual mass tolerated when the support runs out of perfect matchings
# (the input was doubly stochastic only up to solver round-off)
TAU_FOLD = 1e-6


@dataclass(frozen=True)
class Decomposition:
    """Convex combination ``sum_k gammas[k] * P(perms[k])``.

    ``perms[k][i]`` is the column matched to row ``i`` in term ``k``.
    """

    gammas: np.ndarray
    perms: np.ndarray
    residual: float = 0.0

    def __len__(self) -> int:
        return int(self.gammas.size)

    @property
    def terms(self) -> list[tuple[float, tuple[int, ...]]]:
        return [(float(g), tuple(int(c) for c in p)) for g, p in zip(self.gammas, self.perms)]

    def reconstruct(self) -> np.ndarray:
        n = self.perms.shape[1]
        W = np.zeros((n, n))
        rows = np.arange(n)
        for g, p in zip(self.gammas, self.perms):
            W[rows, p] += g
        return W


def decompose(
    W: np.ndarray,
    supp_tol: float = TAU_SUPP,
    resid_tol: float = TAU_RESIDUAL,
    fold_tol: float = TAU_FOLD,
) -> Decomposition:
    """Birkhoff decomposition of a doubly stochastic matrix.

    Parameters
    ----------
    W : ndarray of shape (n, n)
    supp_tol : float
        Entries at or below this value are treated as zero.
    resid_tol : float
        Stop once the remaining mass ``||W||_1`` is at most this.
    fold_tol : float
        If the remaining support has no perfect matching while at most this
        much mass is left, the leftover is folded into the weights instead of
        raising.

    Returns
    -------
    Decomposition
        Weights renormalized to sum to 1.
    """
    W = np.ascontiguousarray(W, dtype=float)
    if W.ndim != 2 or W.shape[0] != W.shape[1]:
        raise DimensionError(f"expected a square matrix, got shape {W.shape}")
    if not np.all(np.isfinite(W)) or W.min() < -1e-9:
        raise ValueError("matrix must be finite and nonnegative")
    n = W.shape[0]
    gammas, perms, resid, status = _kernels.birkhoff_kernel(W, supp_tol, resid_tol, n * n + 1)
    if status == 1 and resid > fold_tol:
        raise NoPerfectMatchingError(
            f"no perfect matching with {resid:.3e} mass left; lower the support "
            "threshold or renormalize the matrix"
        )
    if status == 2:
        raise RuntimeError("decomposition exceeded the term limit")
    if gammas.size == 0:
        raise ValueError("matrix has no mass to decompose")
    # fold the leftover mass in proportionally
    gammas = gammas / gammas.sum()
    return Decomposition(gammas, perms, float(resid))


def _check_alloc(x, dims: ProblemDims) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.shape != dims.shape:
        raise DimensionError(f"allocation shape {x.shape} != {dims.shape}")
    return x


def _perm_to_action(perm: np.ndarray, m: int) -> Action:
    n = perm.size
    inv = np.empty(n, dtype=np.int64)
    inv[perm] = np.arange(n)
    return Action(tuple(int(i) for i in inv[:m]))


def action_distribution(x, dims: ProblemDims) -> tuple[list[Action], np.ndarray]:
    """Actions and probabilities that the sampler draws from for ``x``.

    Distinct permutations that agree on the first ``m`` columns are merged.
    """
    x = _check_alloc(x, dims)
    dec = decompose(complete_to_doubly_stochastic(x, dims))
    probs: dict[Action, float] = {}
    for g, p in zip(dec.gammas, dec.perms):
        a = _perm_to_action(p, dims.m)
        probs[a] = probs.get(a, 0.0) + float(g)
    acts = list(probs)
    return acts, np.array([probs[a] for a in acts])


def sample_action(x, dims: ProblemDims, rng: np.random.Generator) -> Action:
    """Draw one action with ``E[action matrix] = x``."""
    x = _check_alloc(x, dims)
    dec = decompose(complete_to_doubly_stochastic(x, dims))
    k = int(np.searchsorted(np.cumsum(dec.gammas), rng.random(), side="right"))
    k = min(k, len(dec) - 1)
    return _perm_to_action(dec.perms[k], dims.m)


def sample_actions(x, dims: ProblemDims, rng: np.random.Generator, size: int) -> np.ndarray:
    """Draw ``size`` independent actions at once; returns item indices of shape (size, m).

    Equivalent in distribution to ``size`` calls of :func:`sample_action`,
    but decomposes ``x`` only once.
    """
    x = _check_alloc(x, dims)
    dec = decompose(complete_to_doubly_stochastic(x, dims))
    cum = np.cumsum(dec.gammas)
    k = np.minimum(np.searchsorted(cum, rng.random(size), side="right"), len(dec) - 1)
    inv = np.argsort(dec.perms, axis=1)
    return inv[k, : dims.m]
