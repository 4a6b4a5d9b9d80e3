import json

from logsoblab.cli import main
from logsoblab.registry import DEFAULT_PATH


def test_emit_schema(capsys):
    assert main(["emit", "--schema"]) == 0
    assert "scenario" in capsys.readouterr().out


def test_emit_resolved_config(tmp_path):
    out = tmp_path / "e1.json"
    assert main(["emit", "--scenario", "E1", "--seed", "4", "--out", str(out)]) == 0
    d = json.loads(out.read_text())
    assert d["scenario"] == "E1" and d["seed"] == 4 and "densities" in d["params"]


def test_registry_listing(capsys):
    assert main(["registry"]) == 0
    assert "square_fluct_lower_c0" in capsys.readouterr().out


def test_bad_config_exit_code(tmp_path):
    cfg = tmp_path / "bad.json"
    cfg.write_text(json.dumps({"scenario": "E1", "seed": 0, "params": {"bogus": 1}}))
    assert main(["run", "--config", str(cfg), "--out", str(tmp_path)]) == 2


def test_missing_constant_exit_code(tmp_path):
    cfg = tmp_path / "e1.json"
    cfg.write_text(json.dumps({"scenario": "E1", "seed": 0, "params": {"densities": ["gaussian", "uniform"]}}))
    empty = tmp_path / "empty.json"
    assert main(["run", "--config", str(cfg), "--registry", str(empty), "--out", str(tmp_path)]) == 2


def test_run_small_e1(tmp_path, capsys):
    cfg = tmp_path / "e1.json"
    cfg.write_text(json.dumps({"scenario": "E1", "seed": 0, "params": {"n_nodes": 2001, "ledoux_grid": 4001}}))
    rc = main(["run", "--config", str(cfg), "--registry", str(DEFAULT_PATH), "--out", str(tmp_path)])
    out = capsys.readouterr().out
    assert rc == 0, out
    assert (tmp_path / "E1" / "e1_family.csv").exists()
    assert all(line.startswith(("PASS", "==")) for line in out.splitlines())
