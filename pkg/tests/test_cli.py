import json
import os

import numpy as np
import pandas as pd
import pytest

from cli import main
from load_config import embedded_path

from conftest import SIX_PLAYER_NE


def _json_tail(out):
    return json.loads(out[out.index("{"):])


def test_missing_config_is_a_config_error(capsys, tmp_path):
    code = main(["simulate", "--config", str(tmp_path / "nope.json")])
    assert code == 1
    assert "ERROR config:" in capsys.readouterr().err


def test_usage_errors_exit_with_one(capsys):
    assert main(["simulate"]) == 1
    assert main(["simulate", "--config", "x.json", "--bogus"]) == 1
    assert main(["launch"]) == 1
    assert "ERROR usage" in capsys.readouterr().err


def test_unknown_scenario(capsys):
    assert main(["reproduce", "paper-alg9"]) == 1
    assert "no embedded config" in capsys.readouterr().err


def test_runtime_errors_exit_with_two(capsys):
    assert main(["solve-ne", "--config", embedded_path("paper-alg1"), "--tol", "-1"]) == 2
    assert "ERROR invalid-argument:" in capsys.readouterr().err


def test_solve_ne_json(capsys):
    assert main(["solve-ne", "--config", embedded_path("paper-alg1"), "--samples", "100", "--json"]) == 0
    report = _json_tail(capsys.readouterr().out)
    assert np.max(np.abs(np.array(report["ne"]) - SIX_PLAYER_NE)) < 0.02
    assert report["residual"] <= 1e-8
    assert report["monotonicity"]["pass"]
    assert report["k1_bound"] == pytest.approx(2.0 / 484.0)
    assert max(report["lipschitz_estimated"]) <= 22.0


def test_verify_lmi_on_toy(capsys, tmp_path):
    code = main(["verify-lmi", "--config", embedded_path("toy-alg2"), "--out", str(tmp_path), "--json"])
    assert code == 0
    report = _json_tail(capsys.readouterr().out)
    assert report["feasible"] is True
    assert len(report["modes"]) == 2
    assert os.path.isfile(tmp_path / "lmi_report.json")


def test_verify_lmi_with_grid(capsys, tmp_path):
    grid = tmp_path / "grid.json"
    grid.write_text(json.dumps({"U": [0.01, 100.0]}))
    assert main(["verify-lmi", "--config", embedded_path("toy-alg2"), "--grid", str(grid), "--json"]) == 0
    report = _json_tail(capsys.readouterr().out)
    assert report["search"]["best"] == {"U": 0.01}
    assert report["search"]["feasible"] is True


def test_verify_lmi_needs_alg2(capsys):
    assert main(["verify-lmi", "--config", embedded_path("paper-alg1")]) == 1
    assert "ERROR config:" in capsys.readouterr().err


def test_gen_switching_is_reproducible(tmp_path):
    args = ["gen-switching", "--config", embedded_path("paper-alg2"), "--seed", "4", "--horizon", "50"]
    assert main(args + ["--out", str(tmp_path / "a")]) == 0
    assert main(args + ["--out", str(tmp_path / "b")]) == 0
    a = (tmp_path / "a" / "modes.csv").read_bytes()
    b = (tmp_path / "b" / "modes.csv").read_bytes()
    assert a == b
    frame = pd.read_csv(tmp_path / "a" / "modes.csv")
    assert frame["t_jump"].iloc[0] == 0.0
    assert (frame["t_jump"] < 50.0).all()
    assert set(frame["mode"]) <= {1, 2, 3}


def test_reproduce_short_run(capsys, tmp_path):
    out = tmp_path / "alg1"
    code = main(["reproduce", "paper-alg1", "--horizon", "0.05", "--out", str(out), "--json"])
    assert code == 0
    report = _json_tail(capsys.readouterr().out)
    assert report["algorithm"] == "alg1"
    assert len(report["gain_violations"]) == 3
    for name in ("run_config.json", "trajectory.csv", "report.json"):
        assert os.path.isfile(out / name)
    assert not os.path.isfile(out / "events.csv")
    with open(out / "run_config.json") as f:
        assert json.load(f)["horizon"] == 0.05


def test_simulate_alg2_short_run(capsys, tmp_path):
    out = tmp_path / "toy"
    code = main(["simulate", "--config", embedded_path("toy-alg2"), "--horizon", "0.02", "--seed", "9",
                 "--out", str(out)])
    assert code == 0
    for name in ("trajectory.csv", "events.csv", "modes.csv", "report.json"):
        assert os.path.isfile(out / name)
    with open(out / "report.json") as f:
        assert json.load(f)["seed"] == 9
