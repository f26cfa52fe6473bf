import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.stats import chisquare

from ftrl_pbm.core import Action, ProblemDims, action_to_matrix
from ftrl_pbm.oracle import random_allocation, random_doubly_stochastic
from ftrl_pbm.polytope import NoPerfectMatchingError, complete_to_doubly_stochastic
from ftrl_pbm.sampler import action_distribution, decompose, sample_action, sample_actions

from strategies import dims, mixtures, seeds


def test_permutation_single_term():
    P = np.eye(4)[[2, 0, 3, 1]]
    dec = decompose(P)
    assert len(dec) == 1
    assert dec.gammas[0] == 1.0
    np.testing.assert_array_equal(dec.perms[0], [2, 0, 3, 1])


def test_half_half_two_by_two():
    dec = decompose(np.full((2, 2), 0.5))
    assert dec.terms == [(0.5, (0, 1)), (0.5, (1, 0))]


def test_random_six_reconstructs(rng):
    for dense in (False, True):
        W = random_doubly_stochastic(6, rng, dense=dense)
        dec = decompose(W)
        assert np.abs(dec.reconstruct() - W).max() <= 1e-8
        assert len(dec) <= 26


@given(st.integers(1, 8), seeds, st.booleans())
def test_reconstruction_and_term_bound(n, seed, dense):
    W = random_doubly_stochastic(n, np.random.default_rng(seed), dense=dense)
    dec = decompose(W)
    assert np.abs(dec.reconstruct() - W).max() <= 1e-8
    assert len(dec) <= n * n - 2 * n + 2
    assert abs(dec.gammas.sum() - 1) <= 1e-12
    assert dec.gammas.min() > 0


@given(seeds)
def test_decomposition_bit_stable(seed):
    W = random_doubly_stochastic(5, np.random.default_rng(seed), dense=True)
    a, b = decompose(W), decompose(W.copy())
    assert a.gammas.tobytes() == b.gammas.tobytes()
    np.testing.assert_array_equal(a.perms, b.perms)


def test_no_matching_raises():
    W = np.array([[0.5, 0.5, 0.0], [0.5, 0.5, 0.0], [0.0, 0.0, 0.2]])
    with pytest.raises(NoPerfectMatchingError):
        decompose(W)


def test_non_square_rejected():
    with pytest.raises(ValueError):
        decompose(np.ones((2, 3)))


def test_action_matrix_sampled_with_certainty(rng):
    d = ProblemDims(5, 3)
    X = action_to_matrix((4, 0, 2), d)
    assert all(sample_action(X, d, rng) == Action((4, 0, 2)) for _ in range(50))


def test_two_items_frequency(rng):
    d = ProblemDims(2, 1)
    items = sample_actions(np.array([[0.7], [0.3]]), d, rng, 100_000)
    freq = np.mean(items[:, 0] == 0)
    assert abs(freq - 0.7) <= 3 * np.sqrt(0.21 / 100_000)


def test_uniform_positions_chi_square(rng):
    d = ProblemDims(5, 3)
    items = sample_actions(np.full(d.shape, 0.2), d, rng, 100_000)
    for j in range(d.m):
        counts = np.bincount(items[:, j], minlength=d.n)
        assert chisquare(counts).pvalue > 0.001


def test_single_and_batched_agree_in_law(rng):
    d = ProblemDims(4, 2)
    x = random_allocation(d, rng)
    acts, probs = action_distribution(x, d)
    M = sum(p * action_to_matrix(a, d) for a, p in zip(acts, probs))
    np.testing.assert_allclose(M, x, atol=1e-9)


@given(st.data(), seeds)
def test_distribution_expectation_matches(data, seed):
    d = data.draw(dims())
    x = data.draw(mixtures(d))
    acts, probs = action_distribution(x, d)
    M = sum(p * action_to_matrix(a, d) for a, p in zip(acts, probs))
    np.testing.assert_allclose(M, x, atol=1e-8)
    assert abs(probs.sum() - 1) < 1e-12


@given(st.data(), seeds)
def test_sampled_actions_valid(data, seed):
    d = data.draw(dims())
    x = data.draw(mixtures(d))
    items = sample_actions(x, d, np.random.default_rng(seed), 50)
    assert items.shape == (50, d.m)
    for row in items:
        assert len(set(row)) == d.m
        assert np.all(x[row, np.arange(d.m)] > 0)


def test_completion_then_decompose_roundtrip(rng):
    d = ProblemDims(7, 3)
    x = random_allocation(d, rng)
    W = complete_to_doubly_stochastic(x, d)
    assert np.abs(decompose(W).reconstruct()[:, :3] - x).max() <= 1e-8
