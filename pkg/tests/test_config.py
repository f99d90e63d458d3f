import json

import pytest

from csmio.config import ConfigError, ExperimentConfig, load_config


def test_defaults():
    cfg = load_config()
    assert cfg.system.name == "Lorenz3"
    assert cfg.tuning.k_max == 5 and cfg.screening.lambda1 == 1e-6


def test_round_trip(tmp_path):
    cfg = load_config(overrides={"seeds": [3, 4]})
    p = tmp_path / "c.json"
    p.write_text(cfg.to_json())
    assert load_config(p) == cfg


@pytest.mark.parametrize("raw, where", [
    ({"bogus": 1}, "bogus"),
    ({"noise": {"sigmas": []}}, "noise.sigmas"),
    ({"seeds": []}, "seeds"),
    ({"tuning": {"T": 1}}, "tuning.T"),
    ({"system": {"name": "Lorenz96", "params": {"J": 3}}}, "system"),
    ({"system": {"name": "Rossler"}}, "system.name"),
])
def test_invalid(tmp_path, raw, where):
    p = tmp_path / "bad.json"
    p.write_text(json.dumps(raw))
    with pytest.raises(ConfigError, match=where.replace(".", r"\.")):
        load_config(p)


def test_missing_and_malformed(tmp_path):
    with pytest.raises(ConfigError):
        load_config(tmp_path / "none.json")
    p = tmp_path / "x.json"
    p.write_text("{not json")
    with pytest.raises(ConfigError):
        load_config(p)


def test_pipeline_config():
    cfg = ExperimentConfig.model_validate({"dictionary": {"degree": 3}, "tuning": {"fold_scheme": "strided"}})
    pc = cfg.pipeline(dummy_columns=(2,))
    assert pc.degree == 3 and pc.tuning.fold_scheme == "strided" and pc.dummy_columns == (2,)
