import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from csmio import systems
from csmio.systems import ConfigurationError, DivergenceError, TrajectoryDataset


def test_lorenz3_shape_and_first_derivative():
    d = systems.integrate_ode(systems.lorenz3(), [-8.0, 8.0, 27.0], 0.001, 60.0)
    assert d.X.shape == (60001, 3)
    # alpha(y - x), x(rho - z) - y, xy - beta z at (-8, 8, 27)
    np.testing.assert_allclose(d.Xdot[0], [160.0, -16.0, -136.0])


def test_xdot_is_exact_rhs(lorenz_short):
    spec = systems.lorenz3()
    np.testing.assert_array_equal(lorenz_short.Xdot, systems.rhs(spec, lorenz_short.X))


def test_lorenz96_rows_and_columns():
    d = systems.integrate_ode(systems.lorenz96(J=8), systems.default_lorenz96_x0(8), 0.01, 1.0)
    assert d.X.shape == (101, 8)
    assert d.X[0, 0] == pytest.approx(1.01)


def test_lorenz96_needs_four_states():
    with pytest.raises(ConfigurationError):
        systems.lorenz96(J=3)


def test_hopf_origin_is_fixed_point():
    d = systems.integrate_ode(systems.hopf(mu=[0.0]), [0.0, 0.0], 0.01, 1.0)
    assert np.all(d.X == 0.0)


@pytest.mark.parametrize("x0, expected", [(0.5, [0.5, 1.0, 0.0, 0.0])])
def test_logistic_r4_arithmetic(x0, expected):
    d = systems.iterate_map(systems.logistic(r=[4.0]), x0, 3)
    np.testing.assert_allclose(np.r_[d.X[:, 0], d.Xdot[-1, 0]], expected, atol=1e-15)


def test_logistic_fixed_point():
    d = systems.iterate_map(systems.logistic(r=[2.0]), 0.5, 50)
    assert np.all(d.X[:, 0] == 0.5)


def test_logistic_forcing_reproducible():
    spec = systems.logistic(r=[3.9], sigma_eta=0.001)
    a = systems.iterate_map(spec, 0.5, 200, seed=7)
    b = systems.iterate_map(spec, 0.5, 200, seed=7)
    np.testing.assert_array_equal(a.X, b.X)
    assert np.all((a.X[:, 0] >= 0) & (a.X[:, 0] <= 1))


def test_hopf_stack_shape():
    d = systems.bifurcation_stack(systems.hopf())
    assert d.X.shape == (14 * 30001, 3)
    assert d.meta["dummy_columns"] == [2]
    segs = np.split(d.X[:, 2], np.cumsum(d.meta["segments"])[:-1])
    assert all(np.all(s == s[0]) for s in segs)


def test_logistic_stack_shape():
    d = systems.bifurcation_stack(systems.logistic())
    assert d.X.shape == (10000, 2)


def test_single_value_stack_matches_plain_integration():
    spec = systems.hopf(mu=[0.3])
    stack = systems.bifurcation_stack(spec, x0=[2.0, 0.0], dt=0.01, t_end=1.0)
    plain = systems.integrate_ode(spec, [2.0, 0.0], 0.01, 1.0)
    np.testing.assert_array_equal(stack.X[:, :2], plain.X)
    assert np.all(stack.X[:, 2] == 0.3)


def test_stack_needs_bifurcation_system():
    with pytest.raises(ConfigurationError):
        systems.bifurcation_stack(systems.lorenz3())


def test_rk4_is_fourth_order():
    spec = systems.lorenz3()
    x0 = np.array([-8.0, 8.0, 27.0])
    ref = systems.integrate_ode(spec, x0, 0.00025, 1.0).X[::8]
    coarse = systems.integrate_ode(spec, x0, 0.002, 1.0).X
    fine = systems.integrate_ode(spec, x0, 0.001, 1.0).X[::2]
    e1 = np.abs(coarse - ref).max()
    e2 = np.abs(fine - ref).max()
    assert e1 / e2 >= 8.0


def test_divergence_names_time():
    def f(x):  # blows up at t = 1
        with np.errstate(over="ignore", invalid="ignore"):
            return x * x
    with pytest.raises(DivergenceError) as exc:
        systems.rk4(f, np.array([1.0]), 0.01, 1000)
    assert 0.9 < exc.value.time < 1.2


@pytest.mark.parametrize(
    "spec, degree, counts",
    [
        (systems.lorenz3(), 5, [2, 3, 2]),
        (systems.lorenz96(J=8), 2, [4] * 8),
        (systems.hopf(), 3, [4, 4, 0]),
        (systems.logistic(), 3, [2, 1]),
        (systems.cylinder(), 2, [3, 3, 3]),  # z' = -lam z + lam x^2 + lam y^2
    ],
)
def test_ground_truth_sparsity(spec, degree, counts):
    assert systems.ground_truth(spec, degree).sparsity == counts


def test_ground_truth_lorenz_x_column():
    gt = systems.ground_truth(systems.lorenz3(), 5)
    labels = gt.dictionary.labels
    terms = {labels[p]: gt.xi[p, 0] for p in np.flatnonzero(gt.gamma[:, 0])}
    assert terms == {"x": -10.0, "y": 10.0}


def test_ground_truth_hopf_coefficients():
    gt = systems.ground_truth(systems.hopf(), 3)
    labels = gt.dictionary.labels
    terms = {labels[p]: gt.xi[p, 0] for p in np.flatnonzero(gt.gamma[:, 0])}
    assert terms == {"y": -1.0, "x*mu": 1.0, "x^3": -1.0, "x*y^2": -1.0}
    assert gt.dummy_columns == (2,)


def test_ground_truth_degree_too_small_lists_terms():
    with pytest.raises(ConfigurationError, match="x\\^2\\*r"):
        systems.ground_truth(systems.logistic(), 2)


finite = st.floats(-1e6, 1e6, allow_nan=False, width=64)


@settings(max_examples=30, deadline=None)
@given(n=st.integers(1, 6), J=st.integers(1, 4), data=st.data())
def test_csv_round_trip_is_bit_exact(n, J, data, tmp_path_factory):
    X = np.array(data.draw(st.lists(finite, min_size=n * J, max_size=n * J))).reshape(n, J)
    Xd = np.array(data.draw(st.lists(finite, min_size=n * J, max_size=n * J))).reshape(n, J)
    d = TrajectoryDataset(times=np.arange(n) * 0.1, X=X, Xdot=Xd, meta={"seed": 3})
    path = tmp_path_factory.mktemp("csv") / "d.csv"
    d.to_csv(path)
    back = TrajectoryDataset.from_csv(path)
    np.testing.assert_array_equal(back.X, X)
    np.testing.assert_array_equal(back.Xdot, Xd)
    np.testing.assert_array_equal(back.times, d.times)
    assert back.meta == {"seed": 3}


def test_csv_header_layout(lorenz_short):
    head = lorenz_short.to_csv().splitlines()[0]
    assert head == "t,x1,x2,x3,dx1,dx2,dx3"


def test_dataset_rejects_mismatched_shapes():
    with pytest.raises(ValueError):
        TrajectoryDataset(times=np.arange(3.0), X=np.zeros((3, 2)), Xdot=np.zeros((3, 3)))


def test_spec_to_dict_is_json():
    json.dumps(systems.hopf().to_dict())
