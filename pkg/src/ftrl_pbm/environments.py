"""Loss generators: stochastic position-based model, periodic phase switching
and the lower-bound hard instance. Loss convention: ``ell[i, j] = 1`` means
no click on item ``i`` shown at position ``j``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .core import Action, ProblemDims

KINDS = ("stochastic", "periodic_swap", "periodic_reverse", "hard_instance")
DEFAULT_PHASE_LENGTH = 100_000

_SYNTH_BETA = (1.0, 1 / 2, 1 / 3, 1 / 4, 1 / 5)

PRESETS = {
    "synthetic_003": (tuple(0.95 - k * 0.03 for k in range(10)), _SYNTH_BETA),
    "synthetic_001": (tuple(0.95 - k * 0.01 for k in range(10)), _SYNTH_BETA),
    "yandex": (
        (0.894, 0.231, 0.139, 0.0745, 0.0585, 0.0424, 0.0237, 0.0234, 0.0231, 0.0178),
        (0.891, 0.227, 0.0778, 0.0412, 0.0378),
    ),
}


class ParameterError(ValueError):
    pass


@dataclass(frozen=True)
class StochasticParams:
    """Attractiveness ``alpha`` (length n) and examination ``beta`` (length m).

    Requires a strict ordering among the top ``m + 1`` attractiveness values
    (ties allowed below) and strictly decreasing positive ``beta``.
    """

    alpha: tuple
    beta: tuple

    def __post_init__(self):
        a = np.asarray(self.alpha, dtype=float)
        b = np.asarray(self.beta, dtype=float)
        if a.ndim != 1 or b.ndim != 1 or b.size == 0 or a.size < b.size:
            raise ParameterError("need 1-D alpha and beta with len(alpha) >= len(beta) >= 1")
        if np.any(a < 0) or np.any(a > 1):
            raise ParameterError("alpha entries must lie in [0, 1]")
        if np.any(b <= 0) or np.any(b > 1):
            raise ParameterError("beta entries must lie in (0, 1]")
        m = b.size
        top = a[: min(m + 1, a.size)]
        if np.any(np.diff(top) >= 0):
            raise ParameterError("alpha must be strictly decreasing over its first m+1 entries")
        if np.any(np.diff(a[m:]) > 0):
            raise ParameterError("alpha must be non-increasing")
        if np.any(np.diff(b) >= 0):
            raise ParameterError("beta must be strictly decreasing")
        object.__setattr__(self, "alpha", tuple(float(v) for v in a))
        object.__setattr__(self, "beta", tuple(float(v) for v in b))

    @property
    def dims(self) -> ProblemDims:
        return ProblemDims(len(self.alpha), len(self.beta))

    def click_probs(self) -> np.ndarray:
        return np.outer(self.alpha, self.beta)


def preset(name: str) -> StochasticParams:
    """Named parameter sets (n=10, m=5)."""
    try:
        alpha, beta = PRESETS[name]
    except KeyError:
        raise KeyError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}") from None
    return StochasticParams(alpha, beta)


@dataclass(frozen=True)
class GapMatrix:
    delta: np.ndarray
    delta_min: float
    delta_beta: float


def gap_matrix(p: StochasticParams, dims: Optional[ProblemDims] = None) -> GapMatrix:
    """Suboptimality gaps of placing item ``i`` at position ``j``.

    With ``beta[m] = 0``::

        j < i : (beta_j - beta_{j+1}) (alpha_j - alpha_i)
        j = i : 0
        j > i : (beta_{j-1} - beta_j) (alpha_i - alpha_j)
    """
    dims = dims or p.dims
    n, m = dims.shape
    a = np.asarray(p.alpha)
    b = np.append(np.asarray(p.beta), 0.0)
    delta = np.zeros((n, m))
    for i in range(n):
        for j in range(m):
            if j < i:
                delta[i, j] = (b[j] - b[j + 1]) * (a[j] - a[i])
            elif j > i:
                delta[i, j] = (b[j - 1] - b[j]) * (a[i] - a[j])
    delta_min = float(np.min(a[:m] - a[1 : m + 1])) if n > m else float(np.min(np.diff(-a[:m]), initial=np.inf))
    delta_beta = float(np.min(b[:m] - b[1:]))
    return GapMatrix(delta, delta_min, delta_beta)


def best_allocation(p: StochasticParams, dims: Optional[ProblemDims] = None) -> tuple[Action, float]:
    """Item ``j`` at position ``j`` and its expected number of clicks."""
    dims = dims or p.dims
    a = np.asarray(p.alpha)
    b = np.asarray(p.beta)
    return Action(tuple(range(dims.m))), float(np.dot(a[: dims.m], b))


def hard_instance_delta(n: int, m: int, T: int) -> float:
    """``(1/8) sqrt((n - m + 1) / T)``; requires ``n >= max(m + 3, 2m)`` and ``T >= n``."""
    if n < max(m + 3, 2 * m):
        raise ParameterError(f"need n >= max(m+3, 2m), got n={n}, m={m}")
    if T < n:
        raise ParameterError(f"need T >= n, got T={T}, n={n}")
    d = 0.125 * np.sqrt((n - m + 1) / T)
    return float(min(d, np.nextafter(0.5, 0.0)))


@dataclass(frozen=True)
class EnvironmentSpec:
    kind: str
    params: Optional[StochasticParams] = None
    phase_length: int = DEFAULT_PHASE_LENGTH
    hard_u: Optional[tuple] = None
    hard_delta: Optional[float] = None
    hard_n: Optional[int] = None
    deterministic: bool = False
    _cache: dict = field(default_factory=dict, init=False, compare=False, repr=False)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ParameterError(f"kind must be one of {KINDS}, got {self.kind!r}")
        if isinstance(self.phase_length, bool) or int(self.phase_length) < 1:
            raise ParameterError("phase_length must be >= 1")
        if self.kind == "hard_instance":
            if self.hard_u is None or self.hard_delta is None or self.hard_n is None:
                raise ParameterError("hard_instance needs hard_u, hard_delta and hard_n")
            u = tuple(int(i) for i in self.hard_u)
            Action(u)
            if max(u) >= self.hard_n:
                raise ParameterError("hard_u has an item index >= n")
            if not 0 < float(self.hard_delta) < 0.5:
                raise ParameterError("hard_delta must lie in (0, 1/2)")
            object.__setattr__(self, "hard_u", u)
        elif self.params is None:
            raise ParameterError(f"{self.kind} needs StochasticParams")

    @property
    def dims(self) -> ProblemDims:
        if self.kind == "hard_instance":
            return ProblemDims(self.hard_n, len(self.hard_u))
        return self.params.dims

    def phase(self, t: int) -> int:
        return -(-int(t) // int(self.phase_length))


def _phase_params(spec: EnvironmentSpec, t: int) -> tuple[np.ndarray, np.ndarray]:
    a = np.asarray(spec.params.alpha)
    b = np.asarray(spec.params.beta)
    if spec.kind == "stochastic" or spec.phase(t) % 2 == 1:
        return a, b
    if spec.kind == "periodic_swap":
        m = b.size
        return np.concatenate([a[m:], a[:m]]), b
    return a[::-1].copy(), b[::-1].copy()


def phase_params(spec: EnvironmentSpec, t: int) -> tuple[np.ndarray, np.ndarray]:
    """Attractiveness and examination probabilities in force at round ``t``."""
    if spec.kind == "hard_instance":
        raise ParameterError("the hard instance has no click parameters")
    return _phase_params(spec, t)


def mean_loss(spec: EnvironmentSpec, t: int) -> np.ndarray:
    """Expected loss matrix at round ``t``."""
    if spec.kind == "hard_instance":
        key = ("hard",)
        if key not in spec._cache:
            n, m = spec.dims.shape
            mu = np.full((n, m), 0.5)
            mu[list(spec.hard_u), np.arange(m)] = 0.5 - float(spec.hard_delta)
            mu.setflags(write=False)
            spec._cache[key] = mu
        return spec._cache[key]
    odd = spec.kind == "stochastic" or spec.phase(t) % 2 == 1
    key = ("phase", odd)
    if key not in spec._cache:
        a, b = _phase_params(spec, t)
        mu = 1.0 - np.outer(a, b)
        mu.setflags(write=False)
        spec._cache[key] = mu
    return spec._cache[key]


def draw_loss(spec: EnvironmentSpec, t: int, rng: np.random.Generator) -> np.ndarray:
    """Sample the full ``(n, m)`` loss matrix for round ``t``.

    Every entry is an independent Bernoulli draw with the mean from
    :func:`mean_loss`; a deterministic hard instance returns the means.
    """
    if t < 1:
        raise ValueError("rounds start at t = 1")
    mu = mean_loss(spec, t)
    if spec.kind == "hard_instance" and spec.deterministic:
        return mu.copy()
    return (rng.random(mu.shape) < mu).astype(float)
