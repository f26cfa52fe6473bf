"""Command line entry point.

Exit codes: 0 success, 1 invariant failure, 2 configuration or input error.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from .core import ProblemDims, TAU_FEAS_SOLVER, allocation_feasible
from .environments import PRESETS
from .harness import SUITES, ConfigError, ExperimentConfig, check_invariants, fmt, run_experiment
from .polytope import NoPerfectMatchingError, complete_to_doubly_stochastic
from .sampler import decompose

EXIT_OK, EXIT_INVARIANT, EXIT_CONFIG = 0, 1, 2


def read_matrix(path) -> np.ndarray:
    """Matrix file: first line ``n m``, then ``n`` rows of ``m`` whitespace-separated decimals."""
    lines = [ln for ln in Path(path).read_text().splitlines() if ln.strip()]
    if not lines:
        raise ValueError("empty matrix file")
    head = lines[0].split()
    if len(head) != 2:
        raise ValueError("first line must be 'n m'")
    n, m = int(head[0]), int(head[1])
    rows = [[float(v) for v in ln.split()] for ln in lines[1:]]
    if len(rows) != n or any(len(r) != m for r in rows):
        raise ValueError(f"expected {n} rows of {m} values")
    return np.array(rows, dtype=float).reshape(n, m)


def cmd_run(args) -> int:
    cfg = ExperimentConfig.from_json(args.config).override(
        seed=args.seed, out=args.out, route=args.route, record_every=args.record_every
    )
    res = run_experiment(cfg, progress=lambda r: logging.info("replicate %d done", r))
    s = res.summary
    print(f"T={cfg.horizon} replicates={cfg.replicates} route={cfg.solver.route}")
    print(f"final cum_regret mean={fmt(s['cum_regret_mean'][-1])} stderr={fmt(s['cum_regret_stderr'][-1])}")
    print(f"final avg_reward mean={fmt(s['avg_reward_mean'][-1])} stderr={fmt(s['avg_reward_stderr'][-1])}")
    for p in res.files:
        print(f"wrote {p}")
    bad = [tr for tr in res.traces if np.any(tr.avg_reward < 0) or np.any(tr.avg_reward > cfg.dims.m)]
    return EXIT_INVARIANT if bad else EXIT_OK


def cmd_check(args) -> int:
    names = list(SUITES) if args.suite == "all" else [args.suite]
    seed = 0 if args.seed is None else args.seed
    ok = True
    for name in names:
        rep = check_invariants(name, seed=seed)
        print(rep.line())
        ok &= rep.passed
    return EXIT_OK if ok else EXIT_INVARIANT


def cmd_presets(args) -> int:
    for name, (alpha, beta) in PRESETS.items():
        print(name)
        print("  alpha: " + " ".join(fmt(a) for a in alpha))
        print("  beta:  " + " ".join(fmt(b) for b in beta))
    return EXIT_OK


def cmd_decompose(args) -> int:
    x = read_matrix(args.matrix)
    n, m = x.shape
    dims = ProblemDims(n, m)
    rep = allocation_feasible(x, dims, TAU_FEAS_SOLVER)
    if not rep:
        print(
            f"not in the truncated Birkhoff polytope: column residual {rep.column_residual:.3e}, "
            f"row excess {rep.row_excess:.3e}, min entry {rep.min_entry:.3e}",
            file=sys.stderr,
        )
        return EXIT_INVARIANT
    W = complete_to_doubly_stochastic(x, dims)
    try:
        dec = decompose(W)
    except NoPerfectMatchingError as exc:
        print(str(exc), file=sys.stderr)
        return EXIT_INVARIANT
    err = float(np.abs(dec.reconstruct() - W).max())
    print(f"terms {len(dec)} (bound {n * n - 2 * n + 2}) max reconstruction error {err:.3e}")
    for g, perm in dec.terms:
        inv = np.argsort(perm)
        print(f"{fmt(g)}  " + " ".join(str(int(i)) for i in inv[:m]))
    return EXIT_OK if err <= 1e-8 else EXIT_INVARIANT


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ftrl-pbm", description="FTRL-PBM online learning to rank experiments")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run an experiment from a JSON config")
    p.add_argument("config")
    p.add_argument("--seed", type=int, help="override base_seed")
    p.add_argument("--out", help="override output_path")
    p.add_argument("--route", choices=("cbp", "fw"), help="override the solver route")
    p.add_argument("--record-every", type=int, help="override record_every (1 logs every round)")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("check", help="run an invariant suite")
    p.add_argument("suite", help=f"one of {', '.join(SUITES)} or 'all'")
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_check)

    p = sub.add_parser("presets", help="list named click-parameter sets")
    p.set_defaults(func=cmd_presets)

    p = sub.add_parser("decompose", help="decompose an allocation matrix into ranked lists")
    p.add_argument("matrix", help="file with 'n m' then n rows of m decimals")
    p.set_defaults(func=cmd_decompose)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except KeyError as exc:
        print(f"error: {exc.args[0]}", file=sys.stderr)
        return EXIT_CONFIG
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
