import numpy as np
import pytest
from hypothesis import given, strategies as st

from ftrl_pbm.core import (
    Action,
    DimensionError,
    InvalidActionError,
    ProblemDims,
    action_to_matrix,
    allocation_feasible,
    matrix_to_action,
    uniform_allocation,
)

from strategies import actions_for, dims, mixtures


def test_dims_validation():
    assert ProblemDims(3, 2).shape == (3, 2)
    assert ProblemDims(10, 5).n_actions == 30240
    with pytest.raises(DimensionError):
        ProblemDims(2, 3)
    with pytest.raises(DimensionError):
        ProblemDims(0, 0)
    with pytest.raises(DimensionError):
        ProblemDims(2.0, 1)


def test_action_to_matrix_places_ones():
    X = action_to_matrix(Action((2, 1)), ProblemDims(3, 2))
    expected = np.zeros((3, 2))
    expected[2, 0] = expected[1, 1] = 1
    np.testing.assert_array_equal(X, expected)


def test_single_position_column():
    np.testing.assert_array_equal(action_to_matrix((0,), ProblemDims(2, 1)), [[1.0], [0.0]])


def test_duplicate_item_rejected():
    with pytest.raises(InvalidActionError, match="duplicate"):
        Action((1, 1))


def test_out_of_range_item_rejected():
    with pytest.raises(DimensionError):
        action_to_matrix((0, 3), ProblemDims(3, 2))
    with pytest.raises(DimensionError):
        action_to_matrix((0,), ProblemDims(3, 2))


def test_uniform_is_feasible():
    d = ProblemDims(5, 3)
    assert allocation_feasible(uniform_allocation(d), d)


def test_column_sum_violation_reported():
    d = ProblemDims(3, 2)
    x = uniform_allocation(d)
    x[0, 1] += 0.5
    rep = allocation_feasible(x, d)
    assert not rep
    assert rep.column_residual == pytest.approx(0.5)


def test_wrong_shape_is_infeasible_not_error():
    assert not allocation_feasible(np.zeros((2, 2)), ProblemDims(3, 2))


def test_row_excess_reported():
    d = ProblemDims(2, 2)
    x = np.array([[1.0, 1.0], [0.0, 0.0]])
    rep = allocation_feasible(x, d)
    assert not rep and rep.row_excess == pytest.approx(1.0)


@given(st.data())
def test_action_matrices_feasible_at_zero_tol(data):
    d = data.draw(dims())
    a = data.draw(actions_for(d))
    X = action_to_matrix(a, d)
    assert allocation_feasible(X, d, tol=0.0)
    assert matrix_to_action(X, d) == Action(a)


@given(st.data())
def test_mixtures_feasible(data):
    d = data.draw(dims())
    x = data.draw(mixtures(d))
    assert allocation_feasible(x, d, tol=1e-12)


@given(st.data())
def test_square_feasible_means_doubly_stochastic(data):
    n = data.draw(st.integers(1, 6))
    d = ProblemDims(n, n)
    x = data.draw(mixtures(d))
    np.testing.assert_allclose(x.sum(axis=1), 1.0, atol=1e-12)
