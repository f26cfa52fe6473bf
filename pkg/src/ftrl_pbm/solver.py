"""Regularized-leader step: minimize ``<x, L> - eta^{-1} sum sqrt(x)`` over Conv(X).

Two routes are provided:

* ``cbp`` -- cyclic Bregman projection between the column-equality set X1 and
  the row-inequality set X2, run in dual coordinates so every projection is a
  one-dimensional root-finding problem solved by Newton's method.
* ``fw`` -- Frank-Wolfe with an assignment-problem linear oracle, either with
  the open-loop ``2/(1+k)`` step or fully corrective (re-optimizing the
  weights of all visited vertices after each oracle call).
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import NamedTuple, Optional

import numpy as np
from scipy.optimize import linear_sum_assignment

from . import _kernels
from .core import (
    EPS_X,
    TAU_FEAS_SOLVER,
    DimensionError,
    ProblemDims,
    allocation_feasible,
    check_cumulative_loss,
    uniform_allocation,
)

ROUTES = ("cbp", "fw")
FW_STEPS = ("fully_corrective", "open_loop")
REPAIR_LIMIT = 1e-6


class ConfigError(ValueError):
    """Invalid configuration value; ``field`` names the offending entry."""

    def __init__(self, field: str, message: str):
        super().__init__(f"{field}: {message}")
        self.field = field


@dataclass(frozen=True)
class SolverConfig:
    """Settings for the regularized-leader solve.

    ``cbp_corrected`` keeps the row projection exact for the inequality set by
    discarding the previous row multiplier before each row step (Dykstra-type
    bookkeeping); ``cbp_polish`` switches to a Newton method on the dual once
    the alternating projections slow down.
    """

    route: str = "cbp"
    fw_max_iters: int = 500
    cbp_max_cycles: int = 200
    newton_max_iters: int = 50
    newton_tol: float = 1e-12
    convergence_tol: float = 1e-9
    fw_step: str = "fully_corrective"
    fw_gap_tol: float = 1e-6
    cbp_corrected: bool = True
    cbp_polish: bool = True
    floor: float = EPS_X

    def __post_init__(self):
        if self.route not in ROUTES:
            raise ConfigError("route", f"must be one of {ROUTES}, got {self.route!r}")
        if self.fw_step not in FW_STEPS:
            raise ConfigError("fw_step", f"must be one of {FW_STEPS}, got {self.fw_step!r}")
        for name in ("fw_max_iters", "cbp_max_cycles", "newton_max_iters"):
            v = getattr(self, name)
            if isinstance(v, bool) or not isinstance(v, (int, np.integer)) or v < 1:
                raise ConfigError(name, f"must be an integer >= 1, got {v!r}")
        for name in ("newton_tol", "convergence_tol", "fw_gap_tol", "floor"):
            v = getattr(self, name)
            if isinstance(v, bool) or not isinstance(v, (int, float)) or not v > 0:
                raise ConfigError(name, f"must be > 0, got {v!r}")

    def with_route(self, route: str) -> "SolverConfig":
        return replace(self, route=route)


@dataclass
class SolveResult:
    x: np.ndarray
    objective: float
    iterations_used: int
    converged: bool
    worst_kkt_residual: float
    route: str = "cbp"
    repair: float = 0.0
    duals: Optional[tuple] = None
    info: dict = field(default_factory=dict)


class MultiplierSolution(NamedTuple):
    lam: float
    iterations: int
    residual: float
    bisection: bool


def _check_eta(eta) -> float:
    eta = float(eta)
    if not (eta > 0 and np.isfinite(eta)):
        raise ValueError(f"eta must be positive and finite, got {eta}")
    return eta


def objective(x, L, eta) -> float:
    """``<x, L> - eta^{-1} * sum(sqrt(x))``."""
    x = np.asarray(x, dtype=float)
    L = np.asarray(L, dtype=float)
    eta = _check_eta(eta)
    if np.any(x < 0):
        raise ValueError("allocation has a negative entry")
    return float(np.sum(x * L) - np.sum(np.sqrt(x)) / eta)


def objective_gradient(x, L, eta, floor: float = EPS_X) -> np.ndarray:
    """Gradient ``L - 1 / (2 eta sqrt(x))`` evaluated at ``max(x, floor)``."""
    x = np.maximum(np.asarray(x, dtype=float), floor)
    return np.asarray(L, dtype=float) - 0.5 / (np.sqrt(x) * eta)


def unconstrained_leader(L, eta) -> np.ndarray:
    """Minimizer of ``<x, L> + eta^{-1} (<x, 1> - sum sqrt(x))`` over x > 0.

    Stationarity gives ``x = 1 / (4 (1 + eta L)^2)`` entrywise.
    """
    L = check_cumulative_loss(L)
    eta = _check_eta(eta)
    return 0.25 / (1.0 + eta * L) ** 2


def solve_multiplier(a, lam0: float = 0.0, tol: float = 1e-12, max_iter: int = 50) -> MultiplierSolution:
    """Find ``lam > max(a)`` with ``sum 1 / (4 (a - lam)^2) = 1``.

    Newton's method from ``lam0`` (replaced by ``max(a) + 1/2`` when ``lam0``
    is not left of the root); bisection takes over if Newton fails.
    """
    a = np.ascontiguousarray(a, dtype=float).ravel()
    if a.size == 0 or not np.all(np.isfinite(a)):
        raise ValueError("multiplier input must be a non-empty finite vector")
    lam, it, res, bis = _kernels.solve_multiplier(a, float(lam0), float(tol), int(max_iter))
    return MultiplierSolution(float(lam), int(it), float(res), bool(bis))


def project_column_X1(g, cfg: Optional[SolverConfig] = None) -> tuple[np.ndarray, float]:
    """Bregman projection of one column onto ``{sum = 1}``.

    ``g`` is the column of ``grad f = 1 - 1/(2 sqrt(x))`` at the point being
    projected. Returns ``x_i = 1/(4 (g_i - lam - 1)^2)`` and ``lam``.
    """
    cfg = cfg or SolverConfig()
    a = np.asarray(g, dtype=float).ravel() - 1.0
    sol = solve_multiplier(a, 0.0, cfg.newton_tol, cfg.newton_max_iters)
    if sol.residual > cfg.newton_tol:
        raise RuntimeError(f"multiplier solve did not converge (residual {sol.residual:.3e})")
    x = 0.25 / (a - sol.lam) ** 2
    return x, sol.lam


def project_rows_X2(x, cfg: Optional[SolverConfig] = None) -> np.ndarray:
    """Bregman projection of a positive matrix onto ``{row sums <= 1}``.

    Rows that already satisfy the constraint are returned unchanged; the
    others are projected onto ``{row sum = 1}``.
    """
    cfg = cfg or SolverConfig()
    x = np.asarray(x, dtype=float)
    if x.ndim != 2:
        raise DimensionError("expected a 2-D matrix")
    if np.any(x <= 0):
        raise ValueError("row projection needs a strictly positive matrix")
    out = x.copy()
    for i in np.flatnonzero(x.sum(axis=1) > 1.0):
        a = -0.5 / np.sqrt(x[i])
        sol = solve_multiplier(a, 0.0, cfg.newton_tol, cfg.newton_max_iters)
        if sol.residual > cfg.newton_tol:
            raise RuntimeError(f"row {i}: multiplier solve did not converge (residual {sol.residual:.3e})")
        out[i] = 0.25 / (a - sol.lam) ** 2
    return out


def _repair(x: np.ndarray) -> tuple[np.ndarray, float]:
    y = np.maximum(x, 0.0)
    y = y / y.sum(axis=0, keepdims=True)
    return y, float(np.max(np.abs(y - x)))


def solve_cbp(L, eta, cfg: Optional[SolverConfig] = None, warm_duals: Optional[tuple] = None) -> SolveResult:
    """Regularized leader via cyclic Bregman projection.

    Parameters
    ----------
    L : ndarray of shape (n, m)
        Cumulative estimated loss, entrywise nonnegative.
    eta : float
        Learning rate.
    cfg : SolverConfig, optional
    warm_duals : tuple of (nu, mu), optional
        Column and row multipliers from a previous solve. Without them the
        iteration starts from the unconstrained leader (all multipliers 0).

    Returns
    -------
    SolveResult
        ``duals`` holds the final ``(nu, mu)``; ``worst_kkt_residual`` is the
        largest constraint violation or complementarity defect before the
        final column renormalization.
    """
    cfg = cfg or SolverConfig()
    L = check_cumulative_loss(L)
    eta = _check_eta(eta)
    n, m = L.shape
    if m > n:
        raise DimensionError(f"m={m} exceeds n={n}")
    b = -(1.0 + eta * L)
    if warm_duals is None:
        nu = np.zeros(m)
        mu = np.zeros(n)
    else:
        nu = np.array(warm_duals[0], dtype=float)
        mu = np.maximum(np.array(warm_duals[1], dtype=float), 0.0)
        if nu.shape != (m,) or mu.shape != (n,) or not (np.all(np.isfinite(nu)) and np.all(np.isfinite(mu))):
            nu = np.zeros(m)
            mu = np.zeros(n)
    x, cycles, psteps, conv, kkt, change, max_newton, n_bis = _kernels.cbp_kernel(
        b,
        nu,
        mu,
        cfg.cbp_max_cycles,
        cfg.convergence_tol,
        cfg.newton_tol,
        cfg.newton_max_iters,
        cfg.cbp_corrected,
        cfg.cbp_polish,
    )
    x, rep = _repair(x)
    feas = allocation_feasible(x, ProblemDims(n, m), TAU_FEAS_SOLVER)
    converged = bool(conv) and rep < REPAIR_LIMIT and feas.feasible
    return SolveResult(
        x=x,
        objective=objective(x, L, eta),
        iterations_used=int(cycles + psteps),
        converged=converged,
        worst_kkt_residual=float(kkt),
        route="cbp",
        repair=rep,
        duals=(nu, mu),
        info={
            "cycles": int(cycles),
            "newton_polish_steps": int(psteps),
            "last_change": float(change),
            "max_multiplier_iters": int(max_newton),
            "bisection_fallbacks": int(n_bis),
        },
    )


def _lmo(r: np.ndarray) -> np.ndarray:
    pos, items = linear_sum_assignment(r.T)
    out = np.empty(r.shape[1], dtype=np.int64)
    out[pos] = items
    return out


def _vertex(items: np.ndarray, shape) -> np.ndarray:
    s = np.zeros(shape)
    s[items, np.arange(shape[1])] = 1.0
    return s


def fw_gap(x, L, eta, floor: float = EPS_X) -> float:
    """Frank-Wolfe duality gap ``max_s <x - s, grad(x)>`` over Conv(X)."""
    x = np.asarray(x, dtype=float)
    r = objective_gradient(x, L, eta, floor)
    s = _vertex(_lmo(r), x.shape)
    return float(np.sum((x - s) * r))


def _fw_open_loop(L, eta, cfg: SolverConfig, x0: np.ndarray) -> SolveResult:
    x = x0.copy()
    K = cfg.fw_max_iters
    for k in range(1, K + 1):
        r = objective_gradient(x, L, eta, cfg.floor)
        s = _vertex(_lmo(r), x.shape)
        gamma = 2.0 / (1.0 + k)
        x = (1.0 - gamma) * x + gamma * s
    gap = fw_gap(x, L, eta, cfg.floor)
    return SolveResult(
        x=x,
        objective=objective(x, L, eta),
        iterations_used=K,
        converged=gap < cfg.fw_gap_tol,
        worst_kkt_residual=gap,
        route="fw",
        info={"fw_step": "open_loop", "gap": gap},
    )


def _initial_active_set(x0: np.ndarray, dims: ProblemDims) -> tuple[list, np.ndarray]:
    from .sampler import decompose  # local import: sampler depends on polytope only
    from .polytope import complete_to_doubly_stochastic

    dec = decompose(complete_to_doubly_stochastic(x0, dims))
    weights: dict[tuple, float] = {}
    for g, perm in zip(dec.gammas, dec.perms):
        inv = np.empty(dims.n, dtype=np.int64)
        inv[perm] = np.arange(dims.n)
        key = tuple(int(i) for i in inv[: dims.m])
        weights[key] = weights.get(key, 0.0) + float(g)
    keys = list(weights)
    w = np.array([weights[k] for k in keys])
    return keys, w / w.sum()


def _line_search(x, dx, amax, L, eta):
    # exact minimization of the convex 1-D restriction on [0, amax] by bisection on phi'
    moving = dx != 0

    def dphi(a):
        y = x[moving] + a * dx[moving]
        if np.any(y <= 0):
            return np.inf
        return float(np.sum((L[moving] - 0.5 / (np.sqrt(y) * eta)) * dx[moving]))

    if dphi(amax) <= 0:
        return amax
    lo, hi = 0.0, amax
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        if dphi(mid) > 0:
            hi = mid
        else:
            lo = mid
    return lo


def _fw_fully_corrective(L, eta, cfg: SolverConfig, x0: np.ndarray) -> SolveResult:
    n, m = L.shape
    dims = ProblemDims(n, m)
    cols = np.arange(m)
    keys, w = _initial_active_set(x0, dims)
    index = {k: i for i, k in enumerate(keys)}

    def vec(key):
        v = np.zeros(n * m)
        v[np.asarray(key) * m + cols] = 1.0
        return v

    V = np.stack([vec(k) for k in keys], axis=1)
    Lf = L.ravel()
    inner_total = 0
    gap = np.inf
    stale = 0
    k = 0
    x = (V @ w).reshape(n, m)
    while k < cfg.fw_max_iters:
        # re-optimize the weights of the active vertices
        for _ in range(100):
            xf = V @ w
            # entries no active vertex covers are zero; V has zero rows there
            xe = np.maximum(xf, cfg.floor)
            g = Lf - 0.5 / (np.sqrt(xe) * eta)
            h = 0.25 / (eta * xe**1.5)
            gw = V.T @ g
            spread = gw.max() - gw.min()
            if spread <= 1e-3 * cfg.fw_gap_tol:
                break
            kk = w.size
            A = np.zeros((kk + 1, kk + 1))
            A[:kk, :kk] = V.T @ (h[:, None] * V)
            A[:kk, kk] = 1.0
            A[kk, :kk] = 1.0
            # centering keeps the multiplier near 0 so the solve error scales
            # with the spread of gw rather than its magnitude
            rhs = np.concatenate([gw.mean() - gw, [0.0]])
            dw = np.linalg.lstsq(A, rhs, rcond=None)[0][:kk]
            dw -= dw.mean()
            if -((gw - gw.mean()) @ dw) <= 1e-18 * (1.0 + abs(gw).max()):
                break
            neg = dw < 0
            ratios = np.where(neg, w / np.where(neg, -dw, 1.0), np.inf)
            amax = float(ratios.min())
            a = _line_search(xf, V @ dw, amax, Lf, eta)
            inner_total += 1
            if a <= 0:
                break
            w = w + a * dw
            if a == amax:
                keep = np.ones(w.size, dtype=bool)
                keep[int(np.argmin(ratios))] = False
                keep &= w > 0
                if keep.sum() < w.size and keep.any():
                    V = V[:, keep]
                    w = w[keep]
                    keys = [kk_ for kk_, kp in zip(keys, keep) if kp]
                    index = {kk_: i for i, kk_ in enumerate(keys)}
            w = np.maximum(w, 0.0)
            w /= w.sum()
        x = (V @ w).reshape(n, m)
        r = objective_gradient(x, L, eta, cfg.floor)
        s_items = _lmo(r)
        gap = float(np.sum(x * r) - r[s_items, cols].sum())
        k += 1
        if gap <= cfg.fw_gap_tol:
            break
        key = tuple(int(i) for i in s_items)
        if key in index:
            stale += 1
            if stale >= 3:
                break
            continue
        stale = 0
        index[key] = len(keys)
        keys.append(key)
        V = np.concatenate([V, vec(key)[:, None]], axis=1)
        w = np.append(w, 0.0)
    return SolveResult(
        x=x,
        objective=objective(x, L, eta),
        iterations_used=k,
        converged=gap <= cfg.fw_gap_tol,
        worst_kkt_residual=gap,
        route="fw",
        info={"fw_step": "fully_corrective", "gap": gap, "inner_steps": inner_total, "active": len(keys)},
    )


def solve_fw(L, eta, cfg: Optional[SolverConfig] = None, warm_start=None) -> SolveResult:
    """Regularized leader via Frank-Wolfe.

    Parameters
    ----------
    L : ndarray of shape (n, m)
    eta : float
    cfg : SolverConfig, optional
        ``fw_max_iters`` caps the number of linear-oracle calls and
        ``fw_step`` selects the step rule.
    warm_start : ndarray of shape (n, m), optional
        Feasible starting allocation (default: uniform).

    Returns
    -------
    SolveResult
        ``worst_kkt_residual`` is the duality gap at the returned point.
    """
    cfg = cfg or SolverConfig(route="fw")
    L = check_cumulative_loss(L)
    eta = _check_eta(eta)
    n, m = L.shape
    dims = ProblemDims(n, m)
    x0 = uniform_allocation(dims) if warm_start is None else np.asarray(warm_start, dtype=float)
    if not allocation_feasible(x0, dims, TAU_FEAS_SOLVER):
        raise ValueError("warm start is not a feasible allocation")
    x0, _ = _repair(x0)
    if cfg.fw_step == "open_loop":
        return _fw_open_loop(L, eta, cfg, x0)
    return _fw_fully_corrective(L, eta, cfg, x0)


def solve_leader(L, eta, cfg: Optional[SolverConfig] = None, warm_start=None, warm_duals=None) -> SolveResult:
    """Dispatch to the configured route."""
    cfg = cfg or SolverConfig()
    if cfg.route == "fw":
        return solve_fw(L, eta, cfg, warm_start)
    return solve_cbp(L, eta, cfg, warm_duals)
