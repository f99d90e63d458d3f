import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from csmio import systems
from csmio.noise import TYPE1, TYPE2, DegenerateNoiseError, NoiseSpec, corrupt, noise_matrix, snr


def test_type1_touches_only_derivatives(lorenz_short):
    noisy = corrupt(lorenz_short, NoiseSpec(TYPE1, 1.0, seed=0))
    np.testing.assert_array_equal(noisy.X, lorenz_short.X)
    assert not np.array_equal(noisy.Xdot, lorenz_short.Xdot)
    np.testing.assert_allclose(noisy.Xdot - lorenz_short.Xdot, noise_matrix(noisy.X.shape, 1.0, 0), atol=1e-12)


def test_type2_perturbs_states_and_clears_derivatives(lorenz_short):
    noisy = corrupt(lorenz_short, NoiseSpec(TYPE2, 0.1, seed=0))
    assert noisy.Xdot is None
    assert np.abs(noisy.X - lorenz_short.X).max() > 0


def test_zero_sigma_is_identity(lorenz_short):
    noisy = corrupt(lorenz_short, NoiseSpec(TYPE1, 0.0, seed=4))
    np.testing.assert_array_equal(noisy.Xdot, lorenz_short.Xdot)
    assert noisy.Xdot is not lorenz_short.Xdot


def test_type1_without_derivatives_fails(lorenz_short):
    with pytest.raises(ValueError):
        corrupt(lorenz_short.with_(Xdot=None), NoiseSpec(TYPE1, 1.0))


def test_same_seed_same_noise(lorenz_short):
    a = corrupt(lorenz_short, NoiseSpec(TYPE1, 2.0, seed=9))
    b = corrupt(lorenz_short, NoiseSpec(TYPE1, 2.0, seed=9))
    np.testing.assert_array_equal(a.Xdot, b.Xdot)
    assert a.meta["noise"] == {"noise_type": TYPE1, "sigma": 2.0, "seed": 9, "rng": systems.RNG_NAME}


def test_dummy_columns_stay_exact():
    d = systems.bifurcation_stack(systems.hopf(mu=[0.1, 0.2]), dt=0.01, t_end=1.0)
    noisy = corrupt(d, NoiseSpec(TYPE2, 0.5, seed=1))
    np.testing.assert_array_equal(noisy.X[:, 2], d.X[:, 2])


@pytest.mark.parametrize("bad", [dict(noise_type="Type3", sigma=1.0), dict(noise_type=TYPE1, sigma=-1.0),
                                 dict(noise_type=TYPE1, sigma=float("nan"))])
def test_noise_spec_validation(bad):
    with pytest.raises(ValueError):
        NoiseSpec(**bad)


def test_snr_matches_hand_computation():
    S = np.array([[1.0, 0.0], [3.0, 2.0], [5.0, 4.0]])
    Z = np.array([[1.0, 1.0], [-1.0, 0.0], [0.0, -1.0]])
    # var(S) = (4, 4); var(Z) = (1, 1)
    assert snr(S, Z) == pytest.approx(4.0)


def test_snr_zero_noise_variance():
    with pytest.raises(DegenerateNoiseError):
        snr(np.arange(4.0), np.ones(4))


@settings(max_examples=40, deadline=None)
@given(sigma=st.floats(0.01, 100.0), factor=st.floats(0.1, 10.0))
def test_snr_scales_inversely_with_sigma_squared(sigma, factor):
    S = np.sin(np.linspace(0, 20, 500))[:, None]
    Z = noise_matrix(S.shape, 1.0, 3)
    assert snr(S, sigma * factor * Z) == pytest.approx(snr(S, sigma * Z) / factor ** 2, rel=1e-9)
