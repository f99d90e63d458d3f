import numpy as np
import pytest

from csmio import systems
from csmio.evaluation import (
    TABLE_HEADER,
    compare_trajectories,
    recovery_metric,
    simulate_model,
    table_report,
)
from csmio.pipeline import SparseModel


def _exact(spec, degree):
    t = systems.ground_truth(spec, degree)
    names = tuple(t.dictionary.variable_names)
    return SparseModel(t.dictionary, t.gamma.copy(), t.xi.copy(), names), t


def test_exact_model_scores_full():
    model, truth = _exact(systems.lorenz3(), 2)
    rep = recovery_metric(model, truth)
    assert rep.A == 3 and all(rep.matches.values())
    assert rep.to_csv().splitlines()[0] == "equation,term,true,estimated,abs_error,rel_error"


def test_one_wrong_term():
    model, truth = _exact(systems.lorenz3(), 2)
    model.gamma[0, 2] = 1
    assert recovery_metric(model, truth).A == 2


def test_dummy_excluded():
    model, truth = _exact(systems.hopf(), 3)
    rep = recovery_metric(model, truth)
    assert rep.excluded == (2,)
    assert rep.A == 2


def test_dictionary_mismatch():
    model, _ = _exact(systems.lorenz3(), 2)
    _, truth = _exact(systems.lorenz3(), 3)
    with pytest.raises(ValueError):
        recovery_metric(model, truth)


def test_logistic_simulation():
    spec = systems.logistic(r=4.0)
    t = systems.ground_truth(spec, 3)
    model = SparseModel(t.dictionary, t.gamma.copy(), t.xi.copy(), tuple(t.dictionary.variable_names))
    sim = simulate_model(model, [0.5, 4.0], 1.0, 3, kind="discrete")
    np.testing.assert_allclose(sim.X[:, 0], [0.5, 1.0, 0.0, 0.0], atol=1e-12)


def test_exact_lorenz_simulation_tracks(lorenz_short):
    model, _ = _exact(systems.lorenz3(), 2)
    sim = simulate_model(model, lorenz_short.X[0], 0.01, 2.0)
    cmp_ = compare_trajectories(lorenz_short, sim)
    assert cmp_.divergence_time is None
    assert cmp_.l2_error.max() < 1e-12
    assert cmp_.hovmoller_csv().count("\n") == 4
    assert cmp_.error_csv().splitlines()[0] == "t,l2_error"


def test_divergence_truncates():
    model, _ = _exact(systems.lorenz3(), 2)
    model.xi[model.dictionary.index_of_label("x^2"), 0] = 10.0
    model.gamma[model.dictionary.index_of_label("x^2"), 0] = 1
    sim = simulate_model(model, [5.0, 5.0, 5.0], 0.01, 10.0)
    assert sim.meta["divergence_time"] is not None
    assert np.all(np.isfinite(sim.X))


def test_table_report():
    text = table_report([(0.5, 4191.6, 3, 2), (1.0, float("nan"), 2, 1)])
    lines = text.splitlines()
    assert lines[0] == ",".join(TABLE_HEADER) == "sigma,snr,A_baseline,A_csmio"
    assert lines[1] == "0.5,4191.6,2,3"
    with pytest.raises(ValueError):
        table_report([])
