import json

import numpy as np

from stochdim.cli import run
from stochdim.io import read_paths_csv, read_series_csv

FIX = "tests/fixtures"


def _read(p):
    return p.read_bytes()


def test_integrate_worked_fixture(tmp_path):
    code = run(["integrate", "--config", f"{FIX}/w_run.json", "--paths", f"{FIX}/w_path.csv", "--out", str(tmp_path)])
    assert code == 0
    (_, g) = read_series_csv(tmp_path / "gains.csv")[0]
    np.testing.assert_array_equal(g, [0, 0, 3, 5])
    (_, w) = read_series_csv(tmp_path / "wealth.csv")[0]
    np.testing.assert_array_equal(w, [10, 10, 13, 15])
    assert json.loads((tmp_path / "wealth.json").read_text())["v"] == 10.0
    man = json.loads((tmp_path / "manifest.json").read_text())
    assert len(man["config_hash"]) == 64 and set(man["outputs"]) == {"gains.csv", "wealth.csv", "wealth.json"}


def test_verify_corrupted_fixture(tmp_path, capsys):
    code = run(["verify", "--config", f"{FIX}/w_run.json", "--paths", f"{FIX}/w_path_corrupt.csv", "--out", str(tmp_path)])
    assert code == 1
    out = json.loads((tmp_path / "verify.json").read_text())
    assert out["passed"] is False and "piece 2" in out["violations"][0]
    assert run(["verify", "--paths", f"{FIX}/w_path.csv", "--out", str(tmp_path / "ok")]) == 0


def test_simulate_is_byte_identical(tmp_path):
    for d in ("a", "b"):
        assert run(["simulate", "--config", f"{FIX}/market_small.json", "--scenarios", "20", "--out", str(tmp_path / d)]) == 0
    for f in ("paths.csv", "manifest.json"):
        assert _read(tmp_path / "a" / f) == _read(tmp_path / "b" / f)
    assert run(["simulate", "--config", f"{FIX}/market_small.json", "--scenarios", "20", "--seed", "8",
                "--out", str(tmp_path / "c")]) == 0
    assert _read(tmp_path / "a" / "paths.csv") != _read(tmp_path / "c" / "paths.csv")
    man = json.loads((tmp_path / "c" / "manifest.json").read_text())
    assert man["seed"] == 8


def test_dissect_and_integrate_from_simulated(tmp_path):
    assert run(["simulate", "--config", f"{FIX}/market_small.json", "--scenarios", "5", "--out", str(tmp_path)]) == 0
    paths = read_paths_csv(tmp_path / "paths.csv")
    assert run(["dissect", "--config", f"{FIX}/market_small.json", "--paths", str(tmp_path / "paths.csv"),
                "--out", str(tmp_path / "d")]) == 0
    assert (tmp_path / "d" / "pieces.csv").read_text().startswith("scenario_id,k,time,piece,asset_index,side,value\n")
    assert run(["integrate", "--config", f"{FIX}/market_small.json", "--paths", str(tmp_path / "paths.csv"),
                "--out", str(tmp_path / "i")]) == 0
    assert set(read_series_csv(tmp_path / "i" / "gains.csv")) == set(paths)


def test_test_subcommand_reports(tmp_path):
    code = run(["test", "--config", f"{FIX}/market_small.json", "--out", str(tmp_path)])
    body = json.loads((tmp_path / "reports.json").read_text())
    assert [r["name"] for r in body["reports"]] == ["wealth", "deflator", "deflated wealth"]
    assert code == (0 if body["passed"] else 1)
    assert "overall:" in (tmp_path / "reports.txt").read_text()


def test_failing_report_exits_one(tmp_path):
    cfg = {
        "market": {"grid": {"T": 1.0, "step": 0.25},
                   "assets": [{"model": "GBM", "x0": 1.0, "mu": 0.3, "sigma": 0.2}],
                   "n_scenarios": 2000, "seed": 1},
        "tests": {"reports": ["martingale"]},
    }
    (tmp_path / "c.json").write_text(json.dumps(cfg))
    assert run(["test", "--config", str(tmp_path / "c.json"), "--out", str(tmp_path / "o")]) == 1


def test_schema_error_exit_two_with_field_path(tmp_path, capsys):
    bad = {"market": {"grid": {"T": 1.0, "step": 0.1}, "assets": [{"model": "GBM", "x0": -1.0, "sigma": 0.1}]}}
    (tmp_path / "c.json").write_text(json.dumps(bad))
    assert run(["simulate", "--config", str(tmp_path / "c.json"), "--out", str(tmp_path)]) == 2
    assert "market.assets.0.GBM.x0" in capsys.readouterr().err
    (tmp_path / "d.json").write_text(json.dumps({"strategy": {"rule": "momentum"}}))
    assert run(["integrate", "--config", str(tmp_path / "d.json"), "--paths", f"{FIX}/w_path.csv",
                "--out", str(tmp_path)]) == 2


def test_market_path_is_resolved_relative_to_config(tmp_path):
    market = json.loads(open(f"{FIX}/market_small.json").read())["market"]
    (tmp_path / "m.json").write_text(json.dumps(market))
    (tmp_path / "run.json").write_text(json.dumps({"market_path": "m.json", "n_scenarios": 3}))
    assert run(["simulate", "--config", str(tmp_path / "run.json"), "--out", str(tmp_path / "o")]) == 0
    assert len(read_paths_csv(tmp_path / "o" / "paths.csv")) == 3


def test_example_source(tmp_path):
    cfg = {"example": {"step": 0.01, "n_scenarios": 150, "seed": 2},
           "tests": {"reports": ["supermartingale", "deflated"], "checkpoints": [0.0, 0.25, 1.0]}}
    (tmp_path / "c.json").write_text(json.dumps(cfg))
    assert run(["test", "--config", str(tmp_path / "c.json"), "--out", str(tmp_path / "o")]) == 0


def test_piece_cap_is_a_generation_error(tmp_path, capsys):
    cfg = {"example": {"step": 0.01, "n_scenarios": 20, "seed": 2, "max_pieces": 1}}
    (tmp_path / "c.json").write_text(json.dumps(cfg))
    assert run(["simulate", "--config", str(tmp_path / "c.json"), "--out", str(tmp_path / "o")]) == 1
    assert "generation error" in capsys.readouterr().err
