import numpy as np
import pytest

from ftrl_pbm.core import ProblemDims
from ftrl_pbm.environments import (
    EnvironmentSpec,
    ParameterError,
    StochasticParams,
    best_allocation,
    draw_loss,
    gap_matrix,
    hard_instance_delta,
    mean_loss,
    phase_params,
    preset,
)
from ftrl_pbm.oracle import action_values, enumerate_actions, random_params

BETA = (1.0, 1 / 2, 1 / 3, 1 / 4, 1 / 5)


def test_preset_synthetic_003():
    p = preset("synthetic_003")
    np.testing.assert_allclose(p.alpha, [0.95 - 0.03 * k for k in range(10)])
    np.testing.assert_allclose(p.alpha[-1], 0.68)
    np.testing.assert_allclose(p.beta, BETA)


def test_preset_synthetic_001():
    p = preset("synthetic_001")
    np.testing.assert_allclose(p.alpha, [0.95 - 0.01 * k for k in range(10)])
    np.testing.assert_allclose(p.beta, BETA)


def test_preset_yandex():
    p = preset("yandex")
    assert p.alpha == (0.894, 0.231, 0.139, 0.0745, 0.0585, 0.0424, 0.0237, 0.0234, 0.0231, 0.0178)
    assert p.beta == (0.891, 0.227, 0.0778, 0.0412, 0.0378)


def test_unknown_preset():
    with pytest.raises(KeyError):
        preset("nope")


def test_param_validation():
    with pytest.raises(ParameterError):
        StochasticParams((0.5, 0.5, 0.1), (1.0, 0.5))
    with pytest.raises(ParameterError):
        StochasticParams((0.9, 0.5), (0.5, 0.6))
    with pytest.raises(ParameterError):
        StochasticParams((1.2, 0.5), (0.5,))


def test_gap_values_synthetic():
    G = gap_matrix(preset("synthetic_003"))
    assert np.all(np.diag(G.delta[:5, :5]) == 0)
    assert G.delta[1, 0] == pytest.approx(0.015)
    assert G.delta[0, 1] == pytest.approx(0.015)
    assert G.delta_min == pytest.approx(0.03)
    assert G.delta_beta == pytest.approx(0.05)
    assert np.all(G.delta >= 0)


def test_always_click_means_zero_loss(rng):
    spec = EnvironmentSpec("stochastic", StochasticParams((1.0, 0.5), (1.0,)))
    for t in range(1, 50):
        assert draw_loss(spec, t, rng)[0, 0] == 0.0


def test_half_click_frequency(rng):
    spec = EnvironmentSpec("stochastic", StochasticParams((1.0, 0.5), (0.5,)))
    N = 100_000
    hits = sum(draw_loss(spec, t, rng)[0, 0] for t in range(1, N + 1)) / N
    assert abs(hits - 0.5) <= 4 * np.sqrt(0.25 / N)


def test_draw_means_match(rng):
    p = random_params(4, 2, rng)
    spec = EnvironmentSpec("stochastic", p)
    N = 20_000
    mean = sum(draw_loss(spec, t, rng) for t in range(1, N + 1)) / N
    mu = 1 - np.outer(p.alpha, p.beta)
    assert np.all(np.abs(mean - mu) <= 4 * np.sqrt(mu * (1 - mu) / N) + 1e-12)


def test_hard_instance_means():
    spec = EnvironmentSpec("hard_instance", hard_u=(0, 1), hard_delta=0.1, hard_n=4)
    mu = mean_loss(spec, 1)
    expected = np.full((4, 2), 0.5)
    expected[0, 0] = expected[1, 1] = 0.4
    np.testing.assert_allclose(mu, expected)
    det = EnvironmentSpec("hard_instance", hard_u=(0, 1), hard_delta=0.1, hard_n=4, deterministic=True)
    np.testing.assert_array_equal(draw_loss(det, 3, np.random.default_rng(0)), expected)


def test_hard_delta_values():
    assert hard_instance_delta(10, 5, 9600) == pytest.approx(0.003125, abs=1e-15)
    assert hard_instance_delta(10, 5, 10**12) < 1e-5
    with pytest.raises(ParameterError):
        hard_instance_delta(5, 4, 100)


def test_best_allocation_small():
    a, v = best_allocation(StochasticParams((0.7,), (0.4,)))
    assert a.items == (0,) and v == pytest.approx(0.28)


def test_best_allocation_matches_enumeration(rng):
    for _ in range(20):
        p = random_params(4, 2, rng)
        a, v = best_allocation(p)
        acts = enumerate_actions(ProblemDims(4, 2))
        rewards = -action_values(-np.outer(p.alpha, p.beta), acts)
        assert v == pytest.approx(rewards.max(), abs=1e-14)
        assert tuple(acts[np.argmax(rewards)]) == a.items


def test_periodic_swap_boundary():
    p = preset("synthetic_003")
    spec = EnvironmentSpec("periodic_swap", p, phase_length=100)
    a1, _ = phase_params(spec, 100)
    a2, b2 = phase_params(spec, 101)
    np.testing.assert_array_equal(a1, p.alpha)
    np.testing.assert_array_equal(a2, np.concatenate([p.alpha[5:], p.alpha[:5]]))
    np.testing.assert_array_equal(b2, p.beta)
    np.testing.assert_array_equal(phase_params(spec, 201)[0], p.alpha)


def test_periodic_reverse_boundary():
    p = preset("yandex")
    spec = EnvironmentSpec("periodic_reverse", p, phase_length=7)
    a2, b2 = phase_params(spec, 8)
    np.testing.assert_array_equal(a2, p.alpha[::-1])
    np.testing.assert_array_equal(b2, p.beta[::-1])
    np.testing.assert_allclose(mean_loss(spec, 8), 1 - np.outer(p.alpha[::-1], p.beta[::-1]))


def test_draw_requires_positive_round(rng):
    with pytest.raises(ValueError):
        draw_loss(EnvironmentSpec("stochastic", preset("yandex")), 0, rng)
