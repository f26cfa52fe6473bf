"""Shared types: problem dimensions, actions (ranked lists) and allocations.

Items and positions are 0-indexed throughout the package. An allocation is a
plain ``(n, m)`` float array; feasibility is checked with
:func:`allocation_feasible` rather than enforced by a wrapper class.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

TAU_FEAS_EXACT = 1e-9
TAU_FEAS_SOLVER = 1e-7
EPS_X = 1e-8


class DimensionError(ValueError):
    pass


class InvalidActionError(ValueError):
    pass


@dataclass(frozen=True)
class ProblemDims:
    """Number of items ``n`` and ranked positions ``m`` (``1 <= m <= n``)."""

    n: int
    m: int

    def __post_init__(self):
        for name in ("n", "m"):
            v = getattr(self, name)
            if isinstance(v, bool) or not isinstance(v, (int, np.integer)):
                raise DimensionError(f"{name} must be an integer, got {v!r}")
            if v < 1:
                raise DimensionError(f"{name} must be positive, got {v}")
        if self.m > self.n:
            raise DimensionError(f"m={self.m} exceeds n={self.n}")
        object.__setattr__(self, "n", int(self.n))
        object.__setattr__(self, "m", int(self.m))

    @property
    def shape(self) -> tuple[int, int]:
        return (self.n, self.m)

    @property
    def n_actions(self) -> int:
        out = 1
        for k in range(self.n - self.m + 1, self.n + 1):
            out *= k
        return out


@dataclass(frozen=True)
class Action:
    """A ranked list: ``items[j]`` is the item shown at position ``j``."""

    items: tuple[int, ...]

    def __post_init__(self):
        items = tuple(int(i) for i in self.items)
        if len(items) == 0:
            raise InvalidActionError("an action needs at least one position")
        if min(items) < 0:
            raise InvalidActionError(f"negative item index in {items}")
        if len(set(items)) != len(items):
            raise InvalidActionError(f"duplicate item in {items}")
        object.__setattr__(self, "items", items)

    @property
    def m(self) -> int:
        return len(self.items)

    def validate(self, dims: ProblemDims) -> None:
        if self.m != dims.m:
            raise DimensionError(f"action has {self.m} positions, expected {dims.m}")
        if max(self.items) >= dims.n:
            raise DimensionError(f"item index {max(self.items)} out of range for n={dims.n}")

    def to_matrix(self, dims: ProblemDims) -> np.ndarray:
        return action_to_matrix(self, dims)


def action_to_matrix(a: Action | Sequence[int], dims: ProblemDims) -> np.ndarray:
    """0/1 ``(n, m)`` matrix with ``X[a.items[j], j] = 1``."""
    if not isinstance(a, Action):
        a = Action(tuple(a))
    a.validate(dims)
    X = np.zeros(dims.shape)
    X[list(a.items), np.arange(dims.m)] = 1.0
    return X


def matrix_to_action(X: np.ndarray, dims: ProblemDims) -> Action:
    X = np.asarray(X, dtype=float)
    if X.shape != dims.shape:
        raise DimensionError(f"matrix shape {X.shape} != {dims.shape}")
    if not np.all((X == 0) | (X == 1)) or not np.all(X.sum(axis=0) == 1):
        raise InvalidActionError("not a subpermutation matrix")
    return Action(tuple(int(i) for i in X.argmax(axis=0)))


@dataclass(frozen=True)
class FeasibilityReport:
    feasible: bool
    column_residual: float
    row_excess: float
    min_entry: float
    max_entry: float

    def __bool__(self) -> bool:
        return self.feasible


def allocation_feasible(x: np.ndarray, dims: ProblemDims, tol: float = TAU_FEAS_EXACT) -> FeasibilityReport:
    """Check membership of ``x`` in the truncated Birkhoff polytope.

    Never raises on an infeasible input; a wrong shape is reported as
    infeasible with infinite residuals.
    """
    x = np.asarray(x, dtype=float)
    if x.shape != dims.shape or not np.all(np.isfinite(x)):
        inf = float("inf")
        return FeasibilityReport(False, inf, inf, -inf, inf)
    col = float(np.max(np.abs(x.sum(axis=0) - 1.0)))
    row = float(max(np.max(x.sum(axis=1)) - 1.0, 0.0))
    lo = float(x.min())
    hi = float(x.max())
    ok = col <= tol and row <= tol and lo >= -tol and hi <= 1.0 + tol
    return FeasibilityReport(ok, col, row, lo, hi)


def as_allocation(x, dims: ProblemDims) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.shape != dims.shape:
        raise DimensionError(f"allocation shape {x.shape} != {dims.shape}")
    return x


def uniform_allocation(dims: ProblemDims) -> np.ndarray:
    return np.full(dims.shape, 1.0 / dims.n)


def check_loss_matrix(ell, dims: ProblemDims) -> np.ndarray:
    ell = np.asarray(ell, dtype=float)
    if ell.shape != dims.shape:
        raise DimensionError(f"loss shape {ell.shape} != {dims.shape}")
    if np.any(ell < 0) or np.any(ell > 1) or not np.all(np.isfinite(ell)):
        raise ValueError("losses must lie in [0, 1]")
    return ell


def check_cumulative_loss(L) -> np.ndarray:
    L = np.asarray(L, dtype=float)
    if L.ndim != 2:
        raise DimensionError(f"cumulative loss must be 2-D, got shape {L.shape}")
    if not np.all(np.isfinite(L)):
        raise ValueError("cumulative loss has non-finite entries")
    if np.any(L < 0):
        raise ValueError("cumulative loss must be entrywise nonnegative")
    return L
