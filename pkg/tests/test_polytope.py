import numpy as np
import pytest
from hypothesis import given, strategies as st

from ftrl_pbm.core import Action, ProblemDims
from ftrl_pbm.oracle import action_values, enumerate_actions, random_doubly_stochastic
from ftrl_pbm.polytope import (
    NoPerfectMatchingError,
    bregman_divergence,
    complete_to_doubly_stochastic,
    linmin,
    positive_support_matching,
)

from strategies import dims, mixtures, seeds


def test_linmin_single_position():
    a = linmin(np.array([[3.0], [1.0]]), ProblemDims(2, 1))
    assert a == Action((1,))


def test_linmin_zero_cost_tie_break():
    assert linmin(np.zeros((5, 3)), ProblemDims(5, 3)) == Action((0, 1, 2))


def test_linmin_unique_optimum_matches_enumeration(rng):
    d = ProblemDims(3, 2)
    r = rng.normal(size=d.shape)
    acts = enumerate_actions(d)
    best = acts[np.argmin(action_values(r, acts))]
    assert linmin(r, d).items == tuple(best)


def test_linmin_tie_break_is_lexicographic():
    # items 0 and 1 tie at position 0, item 2 is forced to position 1
    r = np.array([[0.0, 5.0], [0.0, 5.0], [9.0, 0.0]])
    assert linmin(r, ProblemDims(3, 2)).items == (0, 2)


@given(st.data(), seeds)
def test_linmin_no_enumerated_action_better(data, seed):
    d = data.draw(dims())
    r = np.random.default_rng(seed).normal(size=d.shape)
    a = linmin(r, d)
    v = float(r[list(a.items), np.arange(d.m)].sum())
    assert v <= action_values(r, enumerate_actions(d)).min() + 1e-12


def test_matching_identity():
    np.testing.assert_array_equal(positive_support_matching(np.eye(4)), np.arange(4))


def test_matching_tie_picks_identity():
    W = 0.5 * (np.eye(2) + np.eye(2)[::-1])
    np.testing.assert_array_equal(positive_support_matching(W), [0, 1])


def test_matching_on_support(rng):
    W = random_doubly_stochastic(5, rng)
    pi = positive_support_matching(W)
    assert sorted(pi) == list(range(5))
    assert np.all(W[np.arange(5), pi] > 0)


def test_matching_missing():
    W = np.array([[1.0, 0.0], [1.0, 0.0]])
    with pytest.raises(NoPerfectMatchingError):
        positive_support_matching(W)


def test_completion_two_by_one():
    W = complete_to_doubly_stochastic(np.array([[0.7], [0.3]]), ProblemDims(2, 1))
    np.testing.assert_allclose(W, [[0.7, 0.3], [0.3, 0.7]], atol=1e-15)


def test_completion_uniform():
    d = ProblemDims(4, 2)
    np.testing.assert_allclose(complete_to_doubly_stochastic(np.full(d.shape, 0.25), d), 0.25)


def test_completion_square_passthrough(rng):
    W = random_doubly_stochastic(4, rng)
    np.testing.assert_array_equal(complete_to_doubly_stochastic(W, ProblemDims(4, 4)), W)


@given(st.data())
def test_completion_doubly_stochastic(data):
    d = data.draw(dims())
    W = complete_to_doubly_stochastic(data.draw(mixtures(d)), d)
    np.testing.assert_allclose(W.sum(axis=0), 1.0, atol=1e-12)
    np.testing.assert_allclose(W.sum(axis=1), 1.0, atol=1e-12)
    assert W.min() >= 0


def test_bregman_zero_on_diagonal(rng):
    x = rng.uniform(0.1, 1.0, (3, 2))
    assert bregman_divergence(x, x) == 0.0


def test_bregman_scalar_value():
    # f(x) = x - sqrt(x): D(1, 1/4) = 0 - (1/4 - 1/2) - (1 - 1)(3/4)
    assert bregman_divergence(np.array([1.0]), np.array([0.25])) == pytest.approx(0.25, abs=1e-15)


def test_bregman_domain():
    with pytest.raises(ValueError):
        bregman_divergence(np.array([-0.1]), np.array([0.5]))
    with pytest.raises(ValueError):
        bregman_divergence(np.array([0.1]), np.array([0.0]))


def test_bregman_nonnegative_sweep(rng):
    for _ in range(1000):
        x = rng.uniform(0, 1, 6)
        y = rng.uniform(1e-3, 1, 6)
        assert bregman_divergence(x, y) >= 0


@given(seeds)
def test_bregman_strictly_convex_in_first_argument(seed):
    r = np.random.default_rng(seed)
    x1, x2 = r.uniform(0.01, 1, 5), r.uniform(0.01, 1, 5)
    y = r.uniform(0.01, 1, 5)
    mid = bregman_divergence(0.5 * (x1 + x2), y)
    avg = 0.5 * (bregman_divergence(x1, y) + bregman_divergence(x2, y))
    if np.abs(x1 - x2).max() > 1e-3:
        assert mid < avg
    assert bregman_divergence(x1, y) > 0 or np.abs(x1 - y).max() < 1e-12
