import copy
import json

import numpy as np
import pytest

from errors import ConfigError
from load_config import (
    apply_overrides,
    auto_k4,
    build_config,
    embedded_path,
    load_config,
    load_embedded,
    matrix_from_spec,
    read_config,
)
from topology import graph_from_edges


def test_embedded_scenarios_load():
    cfg = load_embedded("paper-alg1")
    assert cfg.algorithm == "alg1" and cfg.N == 6 and cfg.n == 2
    assert cfg.graph is not None and cfg.modes is None
    cfg = load_embedded("paper-alg2")
    assert cfg.algorithm == "alg2" and len(cfg.modes) == 3
    assert cfg.switching.s == 3
    assert len(cfg.gains.k4) == 3
    assert cfg.h_steps == 1000
    with pytest.raises(ConfigError):
        embedded_path("paper-alg3")


def test_defaults_are_filled(quad_raw):
    raw = copy.deepcopy(quad_raw)
    for key in ("dt", "horizon", "seed", "output", "gain_check"):
        raw.pop(key, None)
    cfg = build_config(raw, quiet=True)
    assert cfg.dt == 1e-4
    assert cfg.horizon == 10.0
    assert cfg.seed == 0
    assert cfg.output["stride"] == 100
    assert cfg.output["dir"].endswith("quadratic-alg1")
    assert cfg.raw["gain_check"] == "strict"
    assert cfg.steps == 100000


def test_unknown_keys_rejected(quad_raw):
    raw = copy.deepcopy(quad_raw)
    raw["integrator"] = "rk4"
    with pytest.raises(ConfigError):
        build_config(raw)
    raw = copy.deepcopy(quad_raw)
    raw["gains"]["k5"] = 1.0
    with pytest.raises(ConfigError):
        build_config(raw)


def test_step_size_rules(quad_raw, toy_raw):
    raw = copy.deepcopy(quad_raw)
    raw["dt"] = 0.002
    with pytest.raises(ConfigError):
        build_config(raw)
    raw = copy.deepcopy(toy_raw)
    raw["trigger"]["h"] = 0.00105
    with pytest.raises(ConfigError):
        build_config(raw)
    raw = copy.deepcopy(toy_raw)
    raw["trigger"]["h"] = 0.0005
    with pytest.raises(ConfigError):
        build_config(raw)


def test_alg2_rejects_uncertain_dynamics(toy_raw):
    raw = copy.deepcopy(toy_raw)
    raw["disturbance"]["varrho"] = {"type": "linear", "G": [[[0.0, 1.0]], [[1.0, 0.0]]]}
    with pytest.raises(ConfigError):
        build_config(raw)


def test_disconnected_graphs_rejected(quad_raw, toy_raw):
    raw = copy.deepcopy(quad_raw)
    raw["graph"]["edges"] = [[1, 2], [3, 4], [5, 6]]
    with pytest.raises(ConfigError):
        build_config(raw)
    raw = copy.deepcopy(toy_raw)
    raw["modes"][1]["edges"] = []
    with pytest.raises(ConfigError):
        build_config(raw)


def test_invalid_values(quad_raw):
    for key, value in (("seed", -1), ("seed", 1.5), ("horizon", 0.0), ("algorithm", "alg3"), ("workers", 0)):
        raw = copy.deepcopy(quad_raw)
        raw[key] = value
        with pytest.raises(ConfigError):
            build_config(raw)
    raw = copy.deepcopy(quad_raw)
    raw["gains"]["k1"] = 1.0
    with pytest.raises(ConfigError):
        build_config(raw)
    raw = copy.deepcopy(quad_raw)
    del raw["gains"]["alpha"]
    with pytest.raises(ConfigError):
        build_config(raw)


def test_auto_k4(toy_raw):
    raw = copy.deepcopy(toy_raw)
    raw["gains"]["k4"] = "auto"
    cfg = build_config(raw, quiet=True)
    lam_max = (3.0 + np.sqrt(5.0)) / 2.0
    assert np.allclose(cfg.gains.k4, 0.5 / (0.1 * lam_max))
    g = graph_from_edges(2, [[1, 2]])
    assert auto_k4([g], 0.001, 0.01, margin=1.0)[0] == pytest.approx(1.0 / (0.1 * lam_max))


def test_matrix_from_spec():
    assert np.array_equal(matrix_from_spec(2.0, 3), 2.0 * np.eye(3))
    assert np.array_equal(matrix_from_spec({"identity": 0.5}, 2), 0.5 * np.eye(2))
    assert np.array_equal(matrix_from_spec([[1, 2], [2, 1]], 2), [[1.0, 2.0], [2.0, 1.0]])
    with pytest.raises(ConfigError):
        matrix_from_spec([[1, 2]], 2)
    with pytest.raises(ConfigError):
        matrix_from_spec({"diag": 1.0}, 2)


def test_overrides(tmp_path, quad_raw):
    raw = apply_overrides(quad_raw, seed=5, horizon=2.0, dt=5e-5, out=str(tmp_path))
    assert quad_raw["seed"] == 0
    cfg = build_config(raw, quiet=True)
    assert (cfg.seed, cfg.horizon, cfg.dt) == (5, 2.0, 5e-5)
    assert cfg.output["dir"] == str(tmp_path)


def test_read_config_errors(tmp_path, quad_raw):
    with pytest.raises(ConfigError):
        read_config(str(tmp_path / "missing.json"))
    bad = tmp_path / "bad.json"
    bad.write_text("{ not json")
    with pytest.raises(ConfigError):
        read_config(str(bad))
    listed = tmp_path / "list.json"
    listed.write_text("[1, 2]")
    with pytest.raises(ConfigError):
        read_config(str(listed))
    good = tmp_path / "quad.json"
    good.write_text(json.dumps(quad_raw))
    assert load_config(str(good), horizon=1.0).horizon == 1.0


def test_warn_mode_prints(capsys, paper1_raw):
    build_config(paper1_raw)
    out = capsys.readouterr().out
    assert out.count("[WARN]") == 3
    build_config(paper1_raw, quiet=True)
    assert capsys.readouterr().out == ""
