"""The FTRL-PBM round loop.

Each round: solve the regularized-leader problem for the cumulative
importance-weighted loss, sample a ranked list whose expectation is the
solution, observe the losses of the shown (item, position) pairs and add
their importance-weighted estimates to the cumulative loss.

The functional API (:func:`initial_state`, :func:`select`,
:func:`estimate_loss`, :func:`update`) operates on immutable
:class:`LearnerState` values; :class:`FTRLPBM` wraps it in an estimator with
``get_params``/``set_params`` and ``partial_fit``.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import NamedTuple, Optional

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.exceptions import NotFittedError

from .core import EPS_X, Action, ProblemDims, uniform_allocation
from .sampler import sample_action
from .solver import SolveResult, SolverConfig, solve_leader


def learning_rate(t: int) -> float:
    """``eta_t = 1 / (2 sqrt(t))``."""
    if isinstance(t, bool) or int(t) != t or t < 1:
        raise ValueError(f"round index must be an integer >= 1, got {t!r}")
    return 0.5 / np.sqrt(float(t))


@dataclass(frozen=True)
class LearnerState:
    t: int
    L_hat: np.ndarray
    x_prev: np.ndarray
    solver_cfg: SolverConfig
    dims: ProblemDims
    duals: Optional[tuple] = None


def initial_state(dims: ProblemDims, solver_cfg: Optional[SolverConfig] = None) -> LearnerState:
    return LearnerState(
        t=1,
        L_hat=np.zeros(dims.shape),
        x_prev=uniform_allocation(dims),
        solver_cfg=solver_cfg or SolverConfig(),
        dims=dims,
    )


class Selection(NamedTuple):
    x: np.ndarray
    action: Action
    state: LearnerState
    result: SolveResult


def leader(state: LearnerState) -> SolveResult:
    """Regularized leader for round ``state.t`` (no sampling)."""
    return solve_leader(
        state.L_hat,
        learning_rate(state.t),
        state.solver_cfg,
        warm_start=state.x_prev,
        warm_duals=state.duals,
    )


def select(state: LearnerState, rng: np.random.Generator) -> Selection:
    """Solve for ``x_t`` and draw the ranked list to show.

    The returned state carries ``x_t`` (and the dual multipliers of the CBP
    route) as the warm start for the next round; ``t`` is unchanged.
    """
    res = leader(state)
    action = sample_action(res.x, state.dims, rng)
    new_state = replace(state, x_prev=res.x, duals=res.duals)
    return Selection(res.x, action, new_state, res)


def estimate_loss(x: np.ndarray, a: Action, observed, eps: float = EPS_X) -> np.ndarray:
    """Importance-weighted estimate: ``observed[j] / x[a_j, j]`` at the shown entries, 0 elsewhere.

    Denominators below ``eps`` are clamped to ``eps``; use
    :func:`clamped_entries` to detect that case.
    """
    x = np.asarray(x, dtype=float)
    observed = np.asarray(observed, dtype=float).ravel()
    items = np.asarray(a.items if isinstance(a, Action) else a, dtype=np.int64)
    m = x.shape[1]
    if items.size != m or observed.size != m:
        raise ValueError(f"expected {m} shown items and observed losses")
    if np.any(observed < 0) or not np.all(np.isfinite(observed)):
        raise ValueError("observed losses must be finite and nonnegative")
    cols = np.arange(m)
    out = np.zeros_like(x)
    out[items, cols] = observed / np.maximum(x[items, cols], eps)
    return out


def clamped_entries(x: np.ndarray, a: Action, eps: float = EPS_X) -> int:
    items = np.asarray(a.items, dtype=np.int64)
    return int(np.count_nonzero(np.asarray(x)[items, np.arange(items.size)] < eps))


def update(state: LearnerState, ell_hat: np.ndarray) -> LearnerState:
    """Add the estimate to the cumulative loss and advance to the next round."""
    ell_hat = np.asarray(ell_hat, dtype=float)
    if ell_hat.shape != state.dims.shape:
        raise ValueError(f"estimate shape {ell_hat.shape} != {state.dims.shape}")
    if np.any(ell_hat < 0):
        raise ValueError("loss estimates must be nonnegative")
    return replace(state, t=state.t + 1, L_hat=state.L_hat + ell_hat)


class FTRLPBM(BaseEstimator):
    """Online learning to rank with 1/2-Tsallis FTRL under the position-based model.

    Parameters
    ----------
    n_items : int, default=10
    n_positions : int, default=5
    route : {"cbp", "fw"}, default="cbp"
        Solver for the regularized-leader step.
    fw_max_iters : int, default=500
    fw_step : {"fully_corrective", "open_loop"}, default="fully_corrective"
    cbp_max_cycles : int, default=200
    newton_max_iters : int, default=50
    newton_tol : float, default=1e-12
    convergence_tol : float, default=1e-9
    warm_start_duals : bool, default=True
        Reuse the previous round's CBP multipliers as the starting point.
    random_state : int, Generator, SeedSequence or None
        Seed of the sampling stream.

    Attributes
    ----------
    state_ : LearnerState
    allocation_ : ndarray of shape (n_items, n_positions)
        Allocation of the most recent round.
    n_rounds_ : int
        Rounds completed (observations received).
    n_unconverged_ : int
        Rounds whose solver result was flagged as not converged.
    n_clamped_ : int
        Importance weights that hit the denominator floor.

    Examples
    --------
    >>> est = FTRLPBM(n_items=4, n_positions=2, random_state=0)
    >>> x, action = est.select()
    >>> est = est.partial_fit(action, [1.0, 0.0])
    >>> est.n_rounds_
    1
    """

    def __init__(
        self,
        n_items: int = 10,
        n_positions: int = 5,
        route: str = "cbp",
        fw_max_iters: int = 500,
        fw_step: str = "fully_corrective",
        cbp_max_cycles: int = 200,
        newton_max_iters: int = 50,
        newton_tol: float = 1e-12,
        convergence_tol: float = 1e-9,
        warm_start_duals: bool = True,
        random_state=None,
    ):
        self.n_items = n_items
        self.n_positions = n_positions
        self.route = route
        self.fw_max_iters = fw_max_iters
        self.fw_step = fw_step
        self.cbp_max_cycles = cbp_max_cycles
        self.newton_max_iters = newton_max_iters
        self.newton_tol = newton_tol
        self.convergence_tol = convergence_tol
        self.warm_start_duals = warm_start_duals
        self.random_state = random_state

    def solver_config(self) -> SolverConfig:
        return SolverConfig(
            route=self.route,
            fw_max_iters=self.fw_max_iters,
            cbp_max_cycles=self.cbp_max_cycles,
            newton_max_iters=self.newton_max_iters,
            newton_tol=self.newton_tol,
            convergence_tol=self.convergence_tol,
            fw_step=self.fw_step,
        )

    def reset(self) -> "FTRLPBM":
        """Start over from round 1 with a fresh sampling stream."""
        dims = ProblemDims(self.n_items, self.n_positions)
        self.state_ = initial_state(dims, self.solver_config())
        self.rng_ = np.random.default_rng(self.random_state)
        self.allocation_ = None
        self.last_result_ = None
        self.pending_ = None
        self.n_rounds_ = 0
        self.n_unconverged_ = 0
        self.n_clamped_ = 0
        return self

    def _check_started(self):
        if not hasattr(self, "state_"):
            self.reset()

    def _solve(self) -> SolveResult:
        res = leader(self.state_)
        duals = res.duals if self.warm_start_duals else None
        self.state_ = replace(self.state_, x_prev=res.x, duals=duals)
        self.last_result_ = res
        self.allocation_ = res.x
        if not res.converged:
            self.n_unconverged_ += 1
        return res

    def select(self) -> tuple[np.ndarray, Action]:
        """Allocation and sampled ranked list for the current round."""
        self._check_started()
        res = self._solve()
        action = sample_action(res.x, self.state_.dims, self.rng_)
        self.pending_ = (res.x, action)
        return res.x, action

    def partial_fit(self, action, observed) -> "FTRLPBM":
        """Feed back the losses of the list returned by the last :meth:`select`."""
        if getattr(self, "pending_", None) is None:
            raise NotFittedError("call select() before partial_fit()")
        x, shown = self.pending_
        action = action if isinstance(action, Action) else Action(tuple(action))
        if action != shown:
            raise ValueError(f"feedback is for {action.items}, but {shown.items} was shown")
        self._observe(x, action, observed)
        self.pending_ = None
        return self

    def _observe(self, x, action: Action, observed):
        self.n_clamped_ += clamped_entries(x, action)
        self.state_ = update(self.state_, estimate_loss(x, action, observed))
        self.n_rounds_ += 1

    def fit(self, actions, observed) -> "FTRLPBM":
        """Replay a logged trajectory of shown lists and their observed losses.

        Allocations are recomputed round by round, so the log must come from
        this learner's own policy for the estimates to be unbiased.
        """
        actions = np.asarray(actions, dtype=np.int64)
        observed = np.asarray(observed, dtype=float)
        if actions.ndim != 2 or observed.shape != actions.shape:
            raise ValueError("actions and observed must both have shape (T, n_positions)")
        self.reset()
        for a, ell in zip(actions, observed):
            res = self._solve()
            self._observe(res.x, Action(tuple(a)), ell)
        return self

    def predict_allocation(self) -> np.ndarray:
        """Regularized leader for the next round, without sampling or advancing."""
        self._check_started()
        return leader(self.state_).x
