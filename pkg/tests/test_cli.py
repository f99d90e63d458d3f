import json

import pytest

from csmio.cli import EXIT_INVALID, EXIT_OK, main

SMALL = {
    "system": {"name": "Lorenz3", "dt": 0.01, "t_end": 10},
    "noise": {"noise_type": "Type1_OnDerivative", "sigma": 0.5, "sigmas": [0.5]},
    "dictionary": {"degree": 2},
    "tuning": {"k_max": 3, "m": 5, "T": 3},
    "seeds": [0],
}


@pytest.fixture
def config(tmp_path):
    p = tmp_path / "small.json"
    p.write_text(json.dumps(SMALL))
    return p


def test_generate_discover_evaluate(tmp_path, config):
    gen = tmp_path / "gen"
    assert main(["generate", "--config", str(config), "--out", str(gen)]) == EXIT_OK
    assert (gen / "clean.csv").is_file() and (gen / "noisy.csv").is_file()
    disc = tmp_path / "disc"
    assert main(["discover", "--config", str(config), "--out", str(disc), "--data", str(gen / "noisy.csv")]) == EXIT_OK
    model = json.loads((disc / "model.json").read_text())
    assert [e["target"] for e in model["equations"]] == ["x", "y", "z"]
    assert (disc / "diagnostics.csv").is_file() and (disc / "tuning_x.csv").is_file()
    ev = tmp_path / "ev"
    assert main(["evaluate", "--config", str(config), "--out", str(ev), "--model", str(disc / "model.json")]) == EXIT_OK
    assert (ev / "recovery.csv").read_text().splitlines()[-1].startswith("A,,")
    assert (ev / "l2_error.csv").is_file()


def test_benchmark_is_deterministic(tmp_path, config):
    a, b = tmp_path / "a", tmp_path / "b"
    assert main(["benchmark", "--config", str(config), "--out", str(a)]) == EXIT_OK
    assert main(["benchmark", "--config", str(a / "config.effective.json"), "--out", str(b)]) == EXIT_OK
    name = "table_Lorenz3_Type1_OnDerivative_seed0.csv"
    assert (a / name).read_bytes() == (b / name).read_bytes()


def test_invalid_config_exit_code(tmp_path):
    p = tmp_path / "bad.json"
    p.write_text(json.dumps({"tuning": {"T": 1}}))
    out = tmp_path / "o"
    assert main(["benchmark", "--config", str(p), "--out", str(out)]) == EXIT_INVALID
    assert json.loads((out / "errors.json").read_text())["errors"][0]["type"] == "ConfigError"


def test_missing_data_exit_code(tmp_path, config):
    assert main(["discover", "--config", str(config), "--out", str(tmp_path), "--data", str(tmp_path / "nope.csv")]) == EXIT_INVALID
