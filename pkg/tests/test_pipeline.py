import numpy as np
import pytest

from csmio import systems
from csmio.evaluation import recovery_metric
from csmio.pipeline import CSMIO, STLSQ, PipelineConfig, SparseModel, discover, screen_equations, stlsq_baseline
from csmio.screening import ScreeningConfig
from csmio.tuning import TuningConfig

FAST = PipelineConfig(degree=2, tuning=TuningConfig(k_max=3, m=5, T=3))


@pytest.fixture(scope="module")
def clean_model(lorenz_short):
    return discover(lorenz_short, FAST)


def test_clean_lorenz_recovered(clean_model):
    truth = systems.ground_truth(systems.lorenz3(), 2)
    rep = recovery_metric(clean_model, truth)
    assert rep.A == 3
    assert max(r["rel_error"] for r in rep.coefficient_errors) < 1e-8


def test_json_round_trip(clean_model):
    back = SparseModel.from_json(clean_model.to_json())
    np.testing.assert_array_equal(back.gamma, clean_model.gamma)
    np.testing.assert_array_equal(back.xi, clean_model.xi)
    assert back.targets == clean_model.targets
    assert [d.status for d in back.diagnostics] == [d.status for d in clean_model.diagnostics]


def test_equations_text(clean_model):
    eqs = clean_model.equations(2)
    assert eqs[0].startswith("x' = ") and "y" in eqs[0]


def test_predict_matches_derivatives(clean_model, lorenz_short):
    np.testing.assert_allclose(clean_model.predict(lorenz_short.X), lorenz_short.Xdot, atol=1e-6)


def test_failure_is_isolated(lorenz_short):
    Xdot = lorenz_short.Xdot.copy()
    Xdot[:, 1] = 0.0  # a constant target cannot be standardized
    model = discover(lorenz_short.with_(Xdot=Xdot), FAST)
    assert model.failed_equations == [1]
    assert model.diagnostics[1].message
    assert model.gamma[:, 0].sum() == 2 and model.gamma[:, 2].sum() == 2


def test_dummy_columns_skipped(lorenz_short):
    cfg = PipelineConfig(degree=2, tuning=TuningConfig(k_max=3, m=5, T=3), dummy_columns=(2,))
    model = discover(lorenz_short, cfg)
    assert model.gamma[:, 2].sum() == 0
    assert model.diagnostics[2].status == "Skipped"


def test_missing_derivatives_rejected(lorenz_short):
    with pytest.raises(ValueError):
        discover(lorenz_short.with_(Xdot=None), FAST)


def test_screen_equations_keeps_truth(lorenz_short):
    cfg = PipelineConfig(degree=3, screening=ScreeningConfig(p_max=5, s_max=8))
    screens = screen_equations(lorenz_short, cfg)
    truth = systems.ground_truth(systems.lorenz3(), 3)
    for j, res in screens.items():
        assert set(np.flatnonzero(truth.gamma[:, j])) <= set(res.indices)
        assert res.size <= 8


def test_stlsq_baseline(lorenz_short):
    model, empty = stlsq_baseline(lorenz_short, 2)
    assert empty == [False, False, False]
    assert recovery_metric(model, systems.ground_truth(systems.lorenz3(), 2)).A == 3
    _, empty = stlsq_baseline(lorenz_short, 2, threshold=1e6)
    assert all(empty)


def test_stlsq_rejects_negative_threshold(lorenz_short):
    with pytest.raises(ValueError):
        stlsq_baseline(lorenz_short, 2, threshold=-1)


@pytest.mark.parametrize("est", [CSMIO(degree=2, k_max=3, m=5, T=3), STLSQ(degree=2)])
def test_estimators(est, lorenz_short):
    est.fit(lorenz_short.X, lorenz_short.Xdot)
    assert est.coef_.shape == (3, 10)
    np.testing.assert_allclose(est.predict(lorenz_short.X[:5]), lorenz_short.Xdot[:5], atol=1e-6)
