"""Brute-force references for tests: action enumeration, exhaustive regret,
grid search for the regularized leader on tiny instances and an exhaustive
check of the gap inequality.

Nothing here calls the solver or sampler; the point is independence.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .core import ProblemDims
from .environments import StochasticParams, gap_matrix

MAX_ENUMERATION = 10**6


class EnumerationGuardError(ValueError):
    pass


def n_actions(dims: ProblemDims) -> int:
    return math.perm(dims.n, dims.m)


def enumerate_actions(dims: ProblemDims, limit: int = MAX_ENUMERATION) -> np.ndarray:
    """All ordered ``m``-selections of ``range(n)`` in lexicographic order, shape (count, m)."""
    count = n_actions(dims)
    if count > limit:
        raise EnumerationGuardError(f"{count} actions exceeds the enumeration limit {limit}")
    out = np.fromiter(
        itertools.chain.from_iterable(itertools.permutations(range(dims.n), dims.m)),
        dtype=np.int64,
        count=count * dims.m,
    )
    return out.reshape(count, dims.m)


def action_values(r: np.ndarray, actions: np.ndarray) -> np.ndarray:
    """``<X_a, r>`` for every enumerated action."""
    m = actions.shape[1]
    return r[actions, np.arange(m)].sum(axis=1)


def _obj(x, L, eta):
    return np.sum(x * L, axis=-1) - np.sum(np.sqrt(np.maximum(x, 0.0)), axis=-1) / eta


def _param_map(dims: ProblemDims):
    """Affine map from free variables to the flattened allocation, plus a feasibility test."""
    n, m = dims.shape
    if m == 1 and n <= 4:
        k = n - 1

        def to_x(p):
            return np.concatenate([p, 1.0 - p.sum(axis=-1, keepdims=True)], axis=-1)

        def feasible(p):
            return np.all(p >= 0, axis=-1) & (p.sum(axis=-1) <= 1.0)

        return k, to_x, feasible
    if n == 2 and m == 2:

        def to_x(p):
            q = p[..., 0]
            return np.stack([q, 1.0 - q, 1.0 - q, q], axis=-1)

        def feasible(p):
            return (p[..., 0] >= 0) & (p[..., 0] <= 1)

        return 1, to_x, feasible
    raise EnumerationGuardError(f"no low-dimensional parameterization for n={n}, m={m}")


def _golden(f, lo, hi, iters=200):
    g = (math.sqrt(5.0) - 1.0) / 2.0
    a, b = lo, hi
    c = b - g * (b - a)
    d = a + g * (b - a)
    fc, fd = f(c), f(d)
    for _ in range(iters):
        if b - a < 1e-15:
            break
        if fc < fd:
            b, d, fd = d, c, fc
            c = b - g * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + g * (b - a)
            fd = f(d)
    return 0.5 * (a + b)


def brute_force_leader(L, eta: float, dims: ProblemDims, grid_density: Optional[int] = None):
    """Grid search for ``argmin <x, L> - eta^{-1} sum sqrt(x)`` on tiny instances.

    Supported shapes: ``m = 1`` with ``n <= 4`` and ``n = m = 2`` (at most
    three free variables). One free variable: dense grid then golden-section
    refinement; two or three: dense grid then repeated zoomed grids.

    Returns
    -------
    value : float
    allocation : ndarray of shape (n, m)
    """
    L = np.asarray(L, dtype=float)
    n, m = dims.shape
    k, to_x, feasible = _param_map(dims)
    Lf = L.reshape(-1)

    def f_vec(P):
        X = to_x(P)
        vals = _obj(X, Lf, eta)
        return np.where(feasible(P), vals, np.inf)

    if k == 1:
        N = int(grid_density or 10**6)
        grid = np.linspace(0.0, 1.0, N)[:, None]
        vals = f_vec(grid)
        i = int(np.argmin(vals))
        h = 1.0 / (N - 1)
        lo, hi = max(0.0, grid[i, 0] - h), min(1.0, grid[i, 0] + h)
        q = _golden(lambda s: float(f_vec(np.array([[s]]))[0]), lo, hi)
        best = np.array([q]) if f_vec(np.array([[q]]))[0] <= vals[i] else grid[i]
    else:
        N = int(grid_density or (2000 if k == 2 else 400))
        axis = np.linspace(0.0, 1.0, N)
        best, best_val = None, np.inf
        # chunk over the first axis to bound memory
        for a0 in np.array_split(axis, max(1, N // 50)):
            mesh = np.stack(np.meshgrid(a0, *([axis] * (k - 1)), indexing="ij"), axis=-1).reshape(-1, k)
            vals = f_vec(mesh)
            i = int(np.argmin(vals))
            if vals[i] < best_val:
                best, best_val = mesh[i].copy(), float(vals[i])
        h = 1.0 / (N - 1)
        for _ in range(60):
            offs = np.linspace(-h, h, 21)
            mesh = best + np.stack(np.meshgrid(*([offs] * k), indexing="ij"), axis=-1).reshape(-1, k)
            vals = f_vec(mesh)
            i = int(np.argmin(vals))
            if vals[i] <= best_val:
                best, best_val = mesh[i].copy(), float(vals[i])
            h *= 0.25
            if h < 1e-15:
                break
    x = to_x(best[None, :])[0].reshape(n, m)
    return float(_obj(x.reshape(-1), Lf, eta)), x


@dataclass(frozen=True)
class GapReport:
    min_slack: float
    worst_sequence: tuple
    n_sequences: int

    @property
    def passed(self) -> bool:
        return self.min_slack >= -1e-12


def verify_gap_inequality(p: StochasticParams, dims: Optional[ProblemDims] = None) -> GapReport:
    """Minimum over all ranked lists of the regret minus half its summed gaps."""
    dims = dims or p.dims
    acts = enumerate_actions(dims)
    a = np.asarray(p.alpha)
    b = np.asarray(p.beta)
    delta = gap_matrix(p, dims).delta
    cols = np.arange(dims.m)
    regret = (a[: dims.m] * b).sum() - (a[acts] * b).sum(axis=1)
    slack = regret - 0.5 * delta[acts, cols].sum(axis=1)
    i = int(np.argmin(slack))
    return GapReport(float(slack[i]), tuple(int(v) for v in acts[i]), int(acts.shape[0]))


def self_bounding_slack(p: StochasticParams, x: np.ndarray) -> float:
    """Expected per-round regret of allocation ``x`` minus half its gap-weighted mass."""
    a = np.asarray(p.alpha)
    b = np.asarray(p.beta)
    m = b.size
    delta = gap_matrix(p).delta
    regret = float(np.sum((a[:m] * b)[None, :] * x - np.outer(a, b) * x))
    return regret - 0.5 * float(np.sum(delta * x))


def stochastic_regret(actions: np.ndarray, p: StochasticParams) -> np.ndarray:
    """Cumulative pseudo-regret of an action trace (shape (T, m)) from expected gaps."""
    actions = np.asarray(actions, dtype=np.int64)
    a = np.asarray(p.alpha)
    b = np.asarray(p.beta)
    m = b.size
    inst = (b * (a[:m] - a[actions])).sum(axis=1)
    return np.cumsum(inst)


def hindsight_regret(actions: np.ndarray, losses: Sequence[np.ndarray], dims: ProblemDims) -> np.ndarray:
    """Cumulative regret against the best fixed action in hindsight, per prefix.

    ``losses`` may be realized or expected loss matrices; entry ``t`` of the
    output uses the best enumerated action for rounds ``1..t``.
    """
    actions = np.asarray(actions, dtype=np.int64)
    acts = enumerate_actions(dims)
    cols = np.arange(dims.m)
    played = 0.0
    cum = np.zeros(dims.shape)
    out = np.empty(len(actions))
    for t, (a, ell) in enumerate(zip(actions, losses)):
        ell = np.asarray(ell, dtype=float)
        played += float(ell[a, cols].sum())
        cum += ell
        out[t] = played - float(action_values(cum, acts).min())
    return out


def empirical_regret(actions, losses=None, params: Optional[StochasticParams] = None, dims: Optional[ProblemDims] = None):
    """Cumulative regret of a trace.

    With ``params`` the stochastic pseudo-regret from expected gaps is
    returned (losses are ignored); otherwise regret against the best
    enumerated action in hindsight on the given losses.
    """
    if len(actions) == 0:
        raise ValueError("empty trace")
    if params is not None:
        return stochastic_regret(actions, params)
    if losses is None:
        raise ValueError("adversarial regret needs the loss matrices")
    if dims is None:
        ell0 = np.asarray(losses[0])
        dims = ProblemDims(*ell0.shape)
    return hindsight_regret(actions, losses, dims)


def random_params(n: int, m: int, rng: np.random.Generator, min_gap: float = 1e-3) -> StochasticParams:
    """Random valid click parameters: sorted attractiveness, decreasing examination."""
    while True:
        a = np.sort(rng.uniform(0.0, 1.0, n))[::-1]
        b = np.sort(rng.uniform(0.05, 1.0, m))[::-1]
        if np.all(-np.diff(a[: m + 1]) > min_gap) and np.all(-np.diff(b) > min_gap):
            return StochasticParams(tuple(a), tuple(b))


def random_allocation(dims: ProblemDims, rng: np.random.Generator, n_terms: Optional[int] = None) -> np.ndarray:
    """Random point of the truncated Birkhoff polytope as a Dirichlet mixture of random ranked lists."""
    k = int(n_terms or rng.integers(1, dims.n * dims.m + 2))
    w = rng.dirichlet(np.ones(k))
    x = np.zeros(dims.shape)
    cols = np.arange(dims.m)
    for wk in w:
        x[rng.permutation(dims.n)[: dims.m], cols] += wk
    return x


def random_doubly_stochastic(n: int, rng: np.random.Generator, dense: bool = False) -> np.ndarray:
    """Random ``n x n`` doubly stochastic matrix.

    ``dense`` uses Sinkhorn scaling of a positive matrix (full support);
    otherwise a Dirichlet mixture of a few random permutations (sparse support).
    """
    if dense:
        W = rng.uniform(0.05, 1.0, (n, n))
        for _ in range(10_000):
            W /= W.sum(axis=0, keepdims=True)
            W /= W.sum(axis=1, keepdims=True)
            if np.abs(W.sum(axis=0) - 1.0).max() < 1e-15 * n:
                break
        return W
    k = int(rng.integers(1, n + 2))
    w = rng.dirichlet(np.ones(k))
    W = np.zeros((n, n))
    rows = np.arange(n)
    for wk in w:
        W[rows, rng.permutation(n)] += wk
    return W
