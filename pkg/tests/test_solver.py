import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from csmio.solver import (
    OPTIMAL,
    BestSubsetRegressor,
    CollinearityError,
    SubsetProblem,
    exhaustive_oracle,
    ridge_restricted,
    solve_subset,
)


def _instance(seed, N, P, k, lam, box=1000.0):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(N, P))
    w = np.zeros(P)
    w[rng.choice(P, size=min(k, P), replace=False)] = rng.normal(scale=3, size=min(k, P))
    y = X @ w + rng.normal(scale=0.5, size=N)
    return SubsetProblem.from_data(X, y, k, lambda2=lam, box=box)


@settings(max_examples=60, deadline=None)
@given(seed=st.integers(0, 10**6), N=st.integers(20, 60), P=st.integers(2, 12), k=st.integers(1, 4),
       lam=st.sampled_from([0.0, 1e-4, 1.0]))
def test_matches_oracle(seed, N, P, k, lam):
    prob = _instance(seed, N, P, min(k, P), lam)
    got, ref = solve_subset(prob), exhaustive_oracle(prob)
    assert got.status == OPTIMAL
    assert got.objective == pytest.approx(ref.objective, rel=1e-9, abs=1e-9)
    assert got.support == ref.support


def test_exact_two_column_signal():
    rng = np.random.default_rng(0)
    X = rng.normal(size=(30, 6))
    y = 2 * X[:, 1] - 3 * X[:, 4]
    sol = solve_subset(SubsetProblem.from_data(X, y, 2))
    assert sol.support == (1, 4)
    np.testing.assert_allclose(sol.coef[[1, 4]], [2, -3])
    assert sol.objective == pytest.approx(0, abs=1e-10 * float(y @ y))


def test_tie_goes_to_lexicographically_smallest():
    x = np.array([1.0, 2.0, 3.0, 4.0])
    X = np.column_stack([x, x * 2, x * 3])
    prob = SubsetProblem.from_data(X, x, 1)
    assert exhaustive_oracle(prob).support == (0,)


def test_box_constraint_binds():
    X = np.eye(3)
    y = np.array([5.0, 0.0, 0.0])
    sol = solve_subset(SubsetProblem.from_data(X, y, 1, box=2.0))
    assert sol.coef[0] == pytest.approx(2.0)


def test_collinear_without_ridge():
    x = np.arange(5.0)
    X = np.column_stack([x, 2 * x, np.ones(5)])
    with pytest.raises(CollinearityError):
        ridge_restricted(X, x, (0, 1))


def test_problem_validation():
    with pytest.raises(ValueError):
        SubsetProblem(np.eye(2), np.ones(2), 1.0, k=3)
    with pytest.raises(ValueError):
        SubsetProblem(np.eye(2), np.ones(2), 1.0, k=1, lambda2=-1.0)


def test_estimator():
    rng = np.random.default_rng(2)
    X = rng.normal(size=(40, 5))
    y = X[:, 3] * 1.5
    est = BestSubsetRegressor(k=1).fit(X, y)
    assert list(est.support_) == [3]
    np.testing.assert_allclose(est.predict(X), y)
    assert "BestSubsetRegressor(" in repr(est)
