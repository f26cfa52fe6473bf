"""Experiment configuration, replicate runner, CSV emission and invariant suites.

Seed scheme: replicate ``r`` uses ``SeedSequence(base_seed + r)``, spawned into
two children; the first drives the environment's loss draws and the second
the learner's action sampling. Replicates therefore do not depend on each
other or on the order in which they run.
"""

from __future__ import annotations

import json
import logging
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Callable, Optional

import numpy as np

from .core import EPS_X, ProblemDims, TAU_FEAS_SOLVER, allocation_feasible
from .environments import (
    DEFAULT_PHASE_LENGTH,
    KINDS,
    PRESETS,
    EnvironmentSpec,
    ParameterError,
    StochasticParams,
    draw_loss,
    hard_instance_delta,
    mean_loss,
    preset,
)
from .learner import estimate_loss, initial_state, select, update
from .oracle import (
    action_values,
    enumerate_actions,
    random_allocation,
    random_doubly_stochastic,
    random_params,
    verify_gap_inequality,
)
from .solver import ConfigError, SolverConfig, solve_cbp, solve_fw

log = logging.getLogger(__name__)

CSV_COLUMNS = ("t", "cum_regret", "avg_reward", "solver_converged", "wall_ms")
SUMMARY_COLUMNS = (
    "t",
    "cum_regret_mean",
    "cum_regret_stderr",
    "avg_reward_mean",
    "avg_reward_stderr",
    "solver_converged_mean",
)


def fmt(v) -> str:
    """Locale-independent decimal text."""
    return format(float(v), ".12g")


# ---------------------------------------------------------------- config


def _need_int(d: dict, key: str, path: str, default=None, minimum: int = 1) -> int:
    v = d.get(key, default)
    if isinstance(v, bool) or not isinstance(v, int):
        raise ConfigError(f"{path}{key}", f"must be an integer, got {v!r}")
    if v < minimum:
        raise ConfigError(f"{path}{key}", f"must be >= {minimum}, got {v}")
    return v


def _environment_from_dict(d: dict, horizon: int) -> EnvironmentSpec:
    if not isinstance(d, dict):
        raise ConfigError("environment", "must be an object")
    kind = d.get("kind", "stochastic")
    if kind not in KINDS:
        raise ConfigError("environment.kind", f"must be one of {KINDS}, got {kind!r}")
    known = {"kind", "preset", "alpha", "beta", "phase_length", "n", "m", "u", "delta", "deterministic"}
    extra = set(d) - known
    if extra:
        raise ConfigError("environment", f"unknown keys {sorted(extra)}")
    phase_length = _need_int(d, "phase_length", "environment.", DEFAULT_PHASE_LENGTH)
    try:
        if kind == "hard_instance":
            n = _need_int(d, "n", "environment.")
            m = _need_int(d, "m", "environment.")
            u = d.get("u", list(range(m)))
            if not isinstance(u, list) or len(u) != m:
                raise ConfigError("environment.u", f"must be a list of {m} distinct items")
            delta = d.get("delta")
            if delta is None:
                delta = hard_instance_delta(n, m, horizon)
            return EnvironmentSpec(
                "hard_instance",
                phase_length=phase_length,
                hard_u=tuple(u),
                hard_delta=float(delta),
                hard_n=n,
                deterministic=bool(d.get("deterministic", False)),
            )
        if "preset" in d:
            if "alpha" in d or "beta" in d:
                raise ConfigError("environment.preset", "give either a preset or alpha/beta, not both")
            if d["preset"] not in PRESETS:
                raise ConfigError("environment.preset", f"unknown preset {d['preset']!r}; choose from {sorted(PRESETS)}")
            params = preset(d["preset"])
        else:
            if "alpha" not in d or "beta" not in d:
                raise ConfigError("environment", "needs a preset or both alpha and beta")
            params = StochasticParams(tuple(d["alpha"]), tuple(d["beta"]))
        return EnvironmentSpec(kind, params, phase_length=phase_length)
    except ParameterError as exc:
        raise ConfigError("environment", str(exc)) from None
    except (TypeError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError("environment", str(exc)) from None


def _solver_from_dict(d: dict) -> SolverConfig:
    if not isinstance(d, dict):
        raise ConfigError("solver", "must be an object")
    names = {f.name for f in fields(SolverConfig)}
    extra = set(d) - names
    if extra:
        raise ConfigError("solver", f"unknown keys {sorted(extra)}")
    try:
        return SolverConfig(**d)
    except ConfigError as exc:
        raise ConfigError(f"solver.{exc.field}", str(exc).split(": ", 1)[-1]) from None


@dataclass(frozen=True)
class ExperimentConfig:
    """One experiment: environment, horizon, replicates and solver settings.

    ``dims`` is taken from the environment; explicit ``n``/``m`` in the JSON
    are checked against it.
    """

    environment: EnvironmentSpec
    horizon: int
    replicates: int = 1
    base_seed: int = 0
    solver: SolverConfig = field(default_factory=SolverConfig)
    output_path: Optional[str] = None
    record_every: int = 100
    record_wall_time: bool = False
    workers: int = 1
    raw: dict = field(default_factory=dict, compare=False, repr=False)

    @property
    def dims(self) -> ProblemDims:
        return self.environment.dims

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        if not isinstance(d, dict):
            raise ConfigError("<root>", "config must be a JSON object")
        known = {f.name for f in fields(cls)} - {"raw", "environment", "solver"}
        known |= {"environment", "solver", "n", "m"}
        extra = set(d) - known
        if extra:
            raise ConfigError("<root>", f"unknown keys {sorted(extra)}")
        if "horizon" not in d:
            raise ConfigError("horizon", "is required")
        horizon = _need_int(d, "horizon", "")
        replicates = _need_int(d, "replicates", "", 1)
        base_seed = _need_int(d, "base_seed", "", 0, minimum=0)
        if base_seed >= 2**64:
            raise ConfigError("base_seed", "must fit in 64 bits")
        record_every = _need_int(d, "record_every", "", 100)
        workers = _need_int(d, "workers", "", 1)
        if "environment" not in d:
            raise ConfigError("environment", "is required")
        env = _environment_from_dict(d["environment"], horizon)
        solver = _solver_from_dict(d.get("solver", {}))
        if "n" in d or "m" in d:
            n = d.get("n", env.dims.n)
            m = d.get("m", env.dims.m)
            for key, v in (("n", n), ("m", m)):
                if isinstance(v, bool) or not isinstance(v, int) or v < 1:
                    raise ConfigError(key, f"must be a positive integer, got {v!r}")
            if m > n:
                raise ConfigError("m", f"number of positions m={m} exceeds number of items n={n}")
            if (n, m) != env.dims.shape:
                raise ConfigError("n", f"(n, m)=({n}, {m}) does not match the environment {env.dims.shape}")
        out = d.get("output_path")
        if out is not None and not isinstance(out, str):
            raise ConfigError("output_path", "must be a string")
        rwt = d.get("record_wall_time", False)
        if not isinstance(rwt, bool):
            raise ConfigError("record_wall_time", "must be true or false")
        return cls(env, horizon, replicates, base_seed, solver, out, record_every, rwt, workers, dict(d))

    @classmethod
    def from_json(cls, path) -> "ExperimentConfig":
        try:
            text = Path(path).read_text()
        except OSError as exc:
            raise ConfigError("<file>", str(exc)) from None
        try:
            d = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError("<file>", f"invalid JSON: {exc}") from None
        return cls.from_dict(d)

    def override(self, seed=None, out=None, route=None, record_every=None) -> "ExperimentConfig":
        kw = {}
        if record_every is not None:
            if record_every < 1:
                raise ConfigError("record_every", "must be >= 1")
            kw["record_every"] = int(record_every)
        if seed is not None:
            if seed < 0 or seed >= 2**64:
                raise ConfigError("base_seed", "must be in [0, 2**64)")
            kw["base_seed"] = int(seed)
        if out is not None:
            kw["output_path"] = str(out)
        if route is not None:
            kw["solver"] = self.solver.with_route(route)
        if not kw:
            return self
        d = {f.name: getattr(self, f.name) for f in fields(self)}
        d.update(kw)
        return ExperimentConfig(**d)

    def to_dict(self) -> dict:
        """Fully resolved settings (written next to the results)."""
        env = self.environment
        e = {"kind": env.kind, "phase_length": env.phase_length}
        if env.kind == "hard_instance":
            e.update(n=env.hard_n, m=len(env.hard_u), u=list(env.hard_u), delta=env.hard_delta, deterministic=env.deterministic)
        else:
            e.update(alpha=list(env.params.alpha), beta=list(env.params.beta))
        return {
            "n": self.dims.n,
            "m": self.dims.m,
            "environment": e,
            "horizon": self.horizon,
            "replicates": self.replicates,
            "base_seed": self.base_seed,
            "solver": asdict(self.solver),
            "output_path": self.output_path,
            "record_every": self.record_every,
            "record_wall_time": self.record_wall_time,
            "workers": self.workers,
        }


# ---------------------------------------------------------------- running


def checkpoints(T: int, every: int) -> np.ndarray:
    """Rounds at which a row is recorded: multiples of ``every`` plus ``T``."""
    ts = np.arange(every, T + 1, every)
    if ts.size == 0 or ts[-1] != T:
        ts = np.append(ts, T)
    return ts


def replicate_streams(base_seed: int, r: int) -> tuple[np.random.Generator, np.random.Generator]:
    env_ss, sampler_ss = np.random.SeedSequence(base_seed + r).spawn(2)
    return np.random.default_rng(env_ss), np.random.default_rng(sampler_ss)


class _Comparator:
    """Running loss of the best fixed ranked list against expected losses."""

    def __init__(self, env: EnvironmentSpec):
        self.env = env
        dims = env.dims
        self.fixed = None
        if env.kind == "stochastic":
            self.fixed = np.arange(dims.m)
        elif env.kind == "hard_instance":
            self.fixed = np.asarray(env.hard_u)
        else:
            # two phases: best action on (k_odd mu_odd + k_even mu_even)
            self.acts = enumerate_actions(dims)
            odd_t = 1
            even_t = env.phase_length + 1
            self.v_odd = action_values(np.asarray(mean_loss(env, odd_t)), self.acts)
            self.v_even = action_values(np.asarray(mean_loss(env, even_t)), self.acts)
        self.k_odd = 0
        self.k_even = 0
        self.fixed_loss = 0.0
        self.cols = np.arange(dims.m)

    def add(self, t: int, mu: np.ndarray):
        if self.fixed is not None:
            self.fixed_loss += float(mu[self.fixed, self.cols].sum())
        elif self.env.phase(t) % 2 == 1:
            self.k_odd += 1
        else:
            self.k_even += 1

    def best_loss(self) -> float:
        if self.fixed is not None:
            return self.fixed_loss
        return float(np.min(self.k_odd * self.v_odd + self.k_even * self.v_even))


@dataclass
class ReplicateTrace:
    replicate: int
    t: np.ndarray
    cum_regret: np.ndarray
    avg_reward: np.ndarray
    solver_converged: np.ndarray
    wall_ms: np.ndarray
    actions: Optional[np.ndarray] = None
    n_unconverged: int = 0
    n_clamped: int = 0


def run_replicate(cfg: ExperimentConfig, r: int, keep_actions: bool = False) -> ReplicateTrace:
    """Run one replicate of ``cfg``; pure function of ``(cfg, r)``."""
    env = cfg.environment
    dims = env.dims
    T = cfg.horizon
    env_rng, sampler_rng = replicate_streams(cfg.base_seed, r)
    state = initial_state(dims, cfg.solver)
    comp = _Comparator(env)
    cols = np.arange(dims.m)
    ts = checkpoints(T, cfg.record_every)
    k = len(ts)
    out_regret = np.empty(k)
    out_reward = np.empty(k)
    out_conv = np.ones(k, dtype=np.int64)
    out_wall = np.zeros(k)
    actions = np.empty((T, dims.m), dtype=np.int64) if keep_actions else None
    played = 0.0
    clicks = 0.0
    n_unconv = 0
    n_clamped = 0
    ok = True
    row = 0
    t0 = time.perf_counter()
    for t in range(1, T + 1):
        x, a, state, res = select(state, sampler_rng)
        if not res.converged:
            ok = False
            n_unconv += 1
        items = np.asarray(a.items)
        if actions is not None:
            actions[t - 1] = items
        mu = np.asarray(mean_loss(env, t))
        ell = draw_loss(env, t, env_rng)
        obs = ell[items, cols]
        n_clamped += int(np.count_nonzero(x[items, cols] < EPS_X))
        state = update(state, estimate_loss(x, a, obs))
        played += float(mu[items, cols].sum())
        clicks += dims.m - float(obs.sum())
        comp.add(t, mu)
        if t == ts[row]:
            out_regret[row] = played - comp.best_loss()
            out_reward[row] = clicks / t
            out_conv[row] = int(ok)
            if cfg.record_wall_time:
                out_wall[row] = (time.perf_counter() - t0) * 1e3
            ok = True
            row += 1
    return ReplicateTrace(r, ts, out_regret, out_reward, out_conv, out_wall, actions, n_unconv, n_clamped)


def _run_one(args):
    cfg, r, keep = args
    return run_replicate(cfg, r, keep)


@dataclass
class ExperimentResult:
    config: ExperimentConfig
    traces: list
    summary: dict
    files: list = field(default_factory=list)


def summarize(traces: list) -> dict:
    """Per-checkpoint mean and standard error (std with ddof=1 over sqrt(R))."""
    R = len(traces)
    out = {"t": traces[0].t}
    for name in ("cum_regret", "avg_reward"):
        A = np.stack([getattr(tr, name) for tr in traces])
        out[f"{name}_mean"] = A.mean(axis=0)
        out[f"{name}_stderr"] = A.std(axis=0, ddof=1) / np.sqrt(R) if R > 1 else np.zeros(A.shape[1])
    out["solver_converged_mean"] = np.stack([tr.solver_converged for tr in traces]).mean(axis=0)
    return out


def write_trace_csv(path, tr: ReplicateTrace):
    lines = [",".join(CSV_COLUMNS)]
    for i in range(tr.t.size):
        lines.append(
            f"{int(tr.t[i])},{fmt(tr.cum_regret[i])},{fmt(tr.avg_reward[i])},"
            f"{int(tr.solver_converged[i])},{tr.wall_ms[i]:.3f}"
        )
    Path(path).write_text("\n".join(lines) + "\n")


def write_summary_csv(path, summary: dict):
    lines = [",".join(SUMMARY_COLUMNS)]
    for i in range(summary["t"].size):
        vals = [str(int(summary["t"][i]))] + [fmt(summary[c][i]) for c in SUMMARY_COLUMNS[1:]]
        lines.append(",".join(vals))
    Path(path).write_text("\n".join(lines) + "\n")


def run_experiment(
    cfg: ExperimentConfig,
    keep_actions: bool = False,
    progress: Optional[Callable[[int], None]] = None,
) -> ExperimentResult:
    """Run all replicates; write ``replicate_XXX.csv``, ``summary.csv`` and ``config.json``
    under ``cfg.output_path`` when it is set."""
    jobs = [(cfg, r, keep_actions) for r in range(cfg.replicates)]
    traces = []
    if cfg.workers > 1 and cfg.replicates > 1:
        with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            for tr in pool.map(_run_one, jobs):
                traces.append(tr)
                if progress:
                    progress(tr.replicate)
    else:
        for job in jobs:
            tr = _run_one(job)
            traces.append(tr)
            if progress:
                progress(tr.replicate)
    summary = summarize(traces)
    files = []
    if cfg.output_path:
        out = Path(cfg.output_path)
        out.mkdir(parents=True, exist_ok=True)
        width = max(3, len(str(cfg.replicates - 1)))
        for tr in traces:
            p = out / f"replicate_{tr.replicate:0{width}d}.csv"
            write_trace_csv(p, tr)
            files.append(p)
        p = out / "summary.csv"
        write_summary_csv(p, summary)
        files.append(p)
        p = out / "config.json"
        p.write_text(json.dumps(cfg.to_dict(), indent=2, sort_keys=True) + "\n")
        files.append(p)
    for tr in traces:
        if tr.n_unconverged:
            log.warning("replicate %d: %d rounds with an unconverged solve", tr.replicate, tr.n_unconverged)
    return ExperimentResult(cfg, traces, summary, files)


# ---------------------------------------------------------------- suites


@dataclass
class SuiteReport:
    suite: str
    passed: bool
    metric: str
    worst: float
    threshold: float
    details: dict = field(default_factory=dict)

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return f"{status} {self.suite}: {self.metric} = {self.worst:.3e} (threshold {self.threshold:.1e})"


def suite_gap(seed: int = 0, draws: int = 200) -> SuiteReport:
    rng = np.random.default_rng(seed)
    worst = np.inf
    worst_case = None
    for _ in range(draws):
        m = int(rng.integers(1, 5))
        n = int(rng.integers(m, 7))
        p = random_params(n, m, rng)
        rep = verify_gap_inequality(p)
        if rep.min_slack < worst:
            worst, worst_case = rep.min_slack, (p, rep.worst_sequence)
    return SuiteReport("gap", worst >= -1e-12, "min slack", float(worst), -1e-12, {"draws": draws, "case": worst_case})


def suite_sampler(seed: int = 0, allocations: int = 20, samples: int = 100_000, n: int = 6, m: int = 3) -> SuiteReport:
    from .sampler import sample_actions

    rng = np.random.default_rng(seed)
    dims = ProblemDims(n, m)
    cols = np.arange(m)
    worst = 0.0
    for _ in range(allocations):
        x = random_allocation(dims, rng)
        items = sample_actions(x, dims, rng, samples)
        counts = np.zeros(dims.shape)
        np.add.at(counts, (items, np.broadcast_to(cols, items.shape)), 1.0)
        emp = counts / samples
        sd = np.sqrt(x * (1 - x) / samples)
        z = np.where(sd > 0, np.abs(emp - x) / np.maximum(sd, 1e-300), np.where(np.abs(emp - x) > 0, np.inf, 0.0))
        worst = max(worst, float(z.max()))
    return SuiteReport("sampler", worst <= 4.0, "max |mean - x| / sd", worst, 4.0, {"samples": samples})


def suite_solver_agree(seed: int = 0, instances: int = 100) -> SuiteReport:
    rng = np.random.default_rng(seed)
    worst = 0.0
    worst_gap = 0.0
    worst_feas = 0.0
    for _ in range(instances):
        m = int(rng.integers(1, 5))
        n = int(rng.integers(m, 7))
        t = int(rng.integers(1, 5000))
        eta = 0.5 / np.sqrt(t)
        L = rng.uniform(0, 1, (n, m)) * rng.uniform(0, 2 * t / n)
        a = solve_cbp(L, eta)
        b = solve_fw(L, eta)
        worst = max(worst, abs(a.objective - b.objective))
        worst_gap = max(worst_gap, b.info.get("gap", 0.0))
        dims = ProblemDims(n, m)
        for res in (a, b):
            fr = allocation_feasible(res.x, dims, TAU_FEAS_SOLVER)
            worst_feas = max(worst_feas, fr.column_residual, fr.row_excess, -fr.min_entry)
    ok = worst <= 1e-5 and worst_gap <= 1e-4 and worst_feas <= TAU_FEAS_SOLVER
    return SuiteReport(
        "solver-agree", ok, "max |obj_cbp - obj_fw|", worst, 1e-5, {"max_fw_gap": worst_gap, "max_infeasibility": worst_feas}
    )


def suite_decompose(seed: int = 0, matrices: int = 100) -> SuiteReport:
    from .sampler import decompose

    rng = np.random.default_rng(seed)
    worst = 0.0
    worst_terms = 0.0
    for k in range(matrices):
        n = int(rng.integers(1, 9))
        W = random_doubly_stochastic(n, rng, dense=bool(k % 2))
        dec = decompose(W)
        worst = max(worst, float(np.abs(dec.reconstruct() - W).max()))
        worst_terms = max(worst_terms, len(dec) / (n * n - 2 * n + 2))
    ok = worst <= 1e-8 and worst_terms <= 1.0
    return SuiteReport("decompose", ok, "max reconstruction error", worst, 1e-8, {"max_terms_over_bound": worst_terms})


def suite_estimator(seed: int = 0, samples: int = 100_000, n: int = 6, m: int = 3) -> SuiteReport:
    """Monte Carlo mean of the importance-weighted estimate against the true mean loss."""
    from .sampler import sample_actions

    rng = np.random.default_rng(seed)
    dims = ProblemDims(n, m)
    # half uniform mass keeps every entry >= 0.5/n >= 0.05 for n <= 10
    while True:
        x = random_allocation(dims, rng, n_terms=12)
        x = 0.5 * x + 0.5 * np.full(dims.shape, 1.0 / n)
        if x.min() >= 0.05:
            break
    p = random_params(n, m, rng)
    mu = 1.0 - p.click_probs()
    items = sample_actions(x, dims, rng, samples)
    cols = np.arange(m)
    obs = (rng.random((samples, m)) < mu[items, cols]).astype(float)
    total = np.zeros(dims.shape)
    np.add.at(total, (items, np.broadcast_to(cols, items.shape)), obs / x[items, cols])
    est = total / samples
    sd = np.sqrt((mu / x - mu**2) / samples)
    z = float(np.max(np.abs(est - mu) / sd))
    return SuiteReport("estimator", z <= 4.0, "max |mean - ell| / sd", z, 4.0, {"samples": samples})


SUITES = {
    "gap": suite_gap,
    "sampler": suite_sampler,
    "solver-agree": suite_solver_agree,
    "decompose": suite_decompose,
    "estimator": suite_estimator,
}
ALIASES = {
    "gap-inequality": "gap",
    "sampler-unbiasedness": "sampler",
    "solver-agreement": "solver-agree",
    "decomposition-reconstruction": "decompose",
    "estimator-unbiasedness": "estimator",
}


def check_invariants(suite: str, seed: int = 0) -> SuiteReport:
    """Run a named property suite; raises ``KeyError`` for unknown names."""
    name = ALIASES.get(suite, suite)
    if name not in SUITES:
        raise KeyError(f"unknown suite {suite!r}; choose from {sorted(SUITES)} or 'all'")
    return SUITES[name](seed=seed)
