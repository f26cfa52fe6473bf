import numpy as np
import pytest
from hypothesis import given, strategies as st

from ftrl_pbm.core import ProblemDims
from ftrl_pbm.environments import StochasticParams, gap_matrix
from ftrl_pbm.oracle import (
    EnumerationGuardError,
    action_values,
    brute_force_leader,
    empirical_regret,
    enumerate_actions,
    random_allocation,
    random_params,
    self_bounding_slack,
    verify_gap_inequality,
)

from strategies import seeds


@pytest.mark.parametrize("n,m,count", [(3, 2, 6), (2, 2, 2), (10, 5, 30240)])
def test_enumeration_counts(n, m, count):
    acts = enumerate_actions(ProblemDims(n, m))
    assert acts.shape == (count, m)
    assert len({tuple(a) for a in acts}) == count


def test_enumeration_guard():
    with pytest.raises(EnumerationGuardError):
        enumerate_actions(ProblemDims(12, 7))


def test_brute_force_zero_loss():
    _, x = brute_force_leader(np.zeros((2, 1)), 0.5, ProblemDims(2, 1))
    np.testing.assert_allclose(x[:, 0], [0.5, 0.5], atol=1e-6)


def test_brute_force_guard():
    with pytest.raises(EnumerationGuardError):
        brute_force_leader(np.zeros((4, 2)), 0.5, ProblemDims(4, 2))


def test_gap_single_position_closed_form(rng):
    p = random_params(5, 1, rng)
    a, b = np.array(p.alpha), np.array(p.beta)
    rep = verify_gap_inequality(p)
    # slack for item i: b1 (a1 - ai) - (b1 - 0)(a1 - ai) / 2, smallest at i = 1
    assert rep.min_slack == pytest.approx(0.0, abs=1e-15)
    assert rep.passed
    for i in range(1, 5):
        assert b[0] * (a[0] - a[i]) - 0.5 * b[0] * (a[0] - a[i]) >= 0


def test_identity_slack_zero():
    p = StochasticParams((0.9, 0.5, 0.2), (0.7, 0.4))
    assert verify_gap_inequality(p).min_slack == 0.0


def test_gap_sweep(rng):
    worst = min(
        verify_gap_inequality(random_params(int(n), int(m), rng)).min_slack
        for m in rng.integers(1, 5, 200)
        for n in [rng.integers(m, 7)]
    )
    assert worst >= -1e-12


@given(seeds)
def test_self_bounding_on_mixtures(seed):
    r = np.random.default_rng(seed)
    m = int(r.integers(1, 4))
    n = int(r.integers(m, 6))
    p = random_params(n, m, r)
    x = random_allocation(ProblemDims(n, m), r)
    assert self_bounding_slack(p, x) >= -1e-12


def test_regret_zero_for_best():
    p = StochasticParams((0.9, 0.5, 0.2), (0.7, 0.4))
    R = empirical_regret(np.tile([0, 1], (50, 1)), params=p)
    assert np.all(R == 0)


def test_regret_single_round_formula():
    p = StochasticParams((0.9, 0.5, 0.2), (0.7,))
    assert empirical_regret(np.array([[2]]), params=p)[0] == pytest.approx(0.7 * (0.9 - 0.2))


def test_stochastic_regret_ignores_losses(rng):
    p = StochasticParams((0.9, 0.5, 0.2), (0.7, 0.4))
    acts = rng.integers(0, 3, (20, 1))
    acts = np.array([[a[0], (a[0] + 1) % 3] for a in acts])
    junk = [rng.random((3, 2)) for _ in range(20)]
    np.testing.assert_array_equal(empirical_regret(acts, junk, params=p), empirical_regret(acts, params=p))


def test_hindsight_best_matches_enumeration(rng):
    d = ProblemDims(4, 2)
    losses = [rng.random(d.shape) for _ in range(30)]
    acts = enumerate_actions(d)
    played = acts[rng.integers(0, len(acts), 30)]
    R = empirical_regret(played, losses, dims=d)
    total = sum(losses)
    direct = sum(l[a, [0, 1]].sum() for a, l in zip(played, losses)) - action_values(total, acts).min()
    assert R[-1] == pytest.approx(direct)


def test_empty_trace():
    with pytest.raises(ValueError):
        empirical_regret(np.zeros((0, 1)), params=StochasticParams((0.5, 0.2), (0.3,)))
