import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from csmio.tuning import TuningConfig, cross_validate, fold_indices, lambda_grid, ratio_rule


def test_grid_endpoints():
    X = np.eye(2)
    y = np.array([3.0, 8.0])
    g = lambda_grid(X, y, 2, r=0.01)
    np.testing.assert_allclose(g, [0.08, 8.0])


def test_ratio_rule_lorenz_shape():
    assert ratio_rule(60001, 56) == 1e-4
    assert ratio_rule(10, 56) == 1e-2


def test_contiguous_two_folds():
    folds = fold_indices(10, 2)
    assert [list(f) for f in folds] == [[0, 1, 2, 3, 4], [5, 6, 7, 8, 9]]


@settings(max_examples=60, deadline=None)
@given(N=st.integers(2, 500), T=st.integers(2, 10), scheme=st.sampled_from(["contiguous", "strided"]))
def test_folds_partition_rows(N, T, scheme):
    if N < T:
        with pytest.raises(ValueError):
            fold_indices(N, T, scheme)
        return
    folds = fold_indices(N, T, scheme)
    allrows = np.concatenate(folds)
    assert sorted(allrows) == list(range(N))
    sizes = [f.size for f in folds]
    assert max(sizes) - min(sizes) <= 1


def test_exact_signal_picks_true_k():
    rng = np.random.default_rng(0)
    X = rng.normal(size=(60, 6))
    y = X[:, 0] - 2 * X[:, 3]
    res = cross_validate(X, y, TuningConfig(k_max=4, m=5, T=3))
    assert res.k_best == 2
    assert res.errors[1].min() <= 1e-3 * float(y @ y)


def test_errors_are_fold_sums_and_deterministic():
    rng = np.random.default_rng(1)
    X = rng.normal(size=(45, 5))
    y = X[:, 2] + 0.3 * rng.normal(size=45)
    cfg = TuningConfig(k_max=3, m=4, T=3)
    a = cross_validate(X, y, cfg)
    b = cross_validate(X, y, cfg)
    np.testing.assert_array_equal(a.errors, a.fold_errors.sum(axis=2))
    assert np.all(a.errors >= 0)
    assert (a.k_best, a.lambda_best) == (b.k_best, b.lambda_best)
    assert a.to_csv().splitlines()[0].startswith("k,")


@pytest.mark.parametrize("bad", [dict(k_max=0), dict(m=1), dict(T=1), dict(fold_scheme="random"),
                                 dict(cv_coef="ols")])
def test_config_validation(bad):
    with pytest.raises(ValueError):
        TuningConfig(**bad)
