import json
import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from logsoblab.errors import ConfigError
from logsoblab.registry import DEFAULT_PATH, Registry, config_hash
from logsoblab.report import Figure, ScenarioReport, _num, emit_tables
from logsoblab.scenarios import DEFAULTS, ScenarioConfig


def test_empty_registry_assert_mode_raises(tmp_path):
    reg = Registry(tmp_path / "c.json")
    with pytest.raises(ConfigError):
        reg.get("square_fluct_lower_c0")
    with pytest.raises(ConfigError):
        reg.resolve("x", 1.0, "upper", "E1", "abc")


def test_fit_freeze_and_override(tmp_path):
    p = tmp_path / "c.json"
    reg = Registry(p, mode="fit")
    v = reg.resolve("C", 2.0, "upper", "E1", "h1")
    assert v == pytest.approx(2.5)
    assert reg.resolve("c", 2.0, "lower", "E1", "h1") == pytest.approx(1.6)
    reg.save()
    assert Registry(p).version == 1
    # refit in a new session needs the override flag
    with pytest.raises(ConfigError):
        Registry(p, mode="fit").resolve("C", 3.0, "upper", "E1", "h2")
    reg = Registry(p, mode="fit", override=True)
    reg.resolve("C", 3.0, "upper", "E1", "h2")
    reg.save()
    r2 = Registry(p)
    assert r2.version == 2
    assert r2.get("C") == pytest.approx(3.75)
    assert r2.constants["C"]["config_hash"] == "h2"


def test_registry_rejects_bad_mode_and_kind(tmp_path):
    with pytest.raises(ConfigError):
        Registry(tmp_path / "c.json", mode="guess")
    with pytest.raises(ConfigError):
        Registry(tmp_path / "c.json", mode="fit").fit("x", 1.0, "middle", "E1", "h")


def test_shipped_registry_has_constants():
    reg = Registry(DEFAULT_PATH)
    assert reg.version >= 1
    for name in ("square_fluct_lower_c0", "square_psi1_centering_C", "square_psi1_vs_fluct_C", "rotational_conc_c", "rotational_rho_psi2_C",
                 "body_var_lower_C", "herbst_C", "logK_growth_C", "perturbed_sigma_C"):
        assert name in reg


@settings(max_examples=50, deadline=None)
@given(st.dictionaries(st.text(min_size=1, max_size=5), st.integers() | st.floats(allow_nan=False)))
def test_config_hash_ignores_key_order(d):
    rev = dict(reversed(list(d.items())))
    assert config_hash(d) == config_hash(rev)
    assert len(config_hash(d)) == 12


def test_check_relations():
    rep = ScenarioReport("E0", {}, "h")
    assert rep.check("a", 1.0, "<=", 1.0).passed
    assert rep.check("b", 1.1, "<=", 1.0, 0.2).passed
    assert not rep.check("c", 0.5, ">=", 1.0, 0.1).passed
    assert rep.check("d", 1.0, "~=", 1.05, 0.1).passed
    with pytest.raises(ValueError):
        rep.check("e", 1.0, "<", 2.0)
    assert not rep.passed
    line = rep.assertions[2].line("E0")
    assert line.startswith("FAIL [E0] c: 0.5 >= 1 (tol 0.1)")


def test_tables_append_only():
    rep = ScenarioReport("E0", {}, "h")
    rep.add_table("t", [{"a": 1}])
    with pytest.raises(ValueError):
        rep.add_table("t", [{"a": 2}])


def test_emit_empty_report(tmp_path):
    rep = ScenarioReport("E0", {"seed": 0}, "h")
    paths = emit_tables(rep, tmp_path / "out")
    s = json.loads((tmp_path / "out" / "summary.json").read_text())
    assert s["passed"] and s["n_assertions"] == 0
    assert [p.name for p in paths] == ["summary.json"]


def test_emit_tables_and_figures(tmp_path):
    rep = ScenarioReport("E0", {}, "h")
    rep.add_table("curve", [{"t": 0.1, "v": 1.0 / 3.0}, {"t": 1.0, "v": math.inf}])
    rep.add_figure("fig", Figure("curve", "t", ["v"], logx=True))
    emit_tables(rep, tmp_path)
    assert (tmp_path / "curve.csv").read_text() == "t,v\n0.1,0.333333333333\n1,inf\n"
    assert "set logscale x" in (tmp_path / "fig.gp").read_text()
    assert (tmp_path / "fig.dat").read_text().splitlines()[0] == "# t v"


def test_num_formatting():
    assert _num(True) == "1"
    assert _num(3) == "3"
    assert _num(float("nan")) == "nan"
    assert _num(-math.inf) == "-inf"


def test_config_validation():
    with pytest.raises(ConfigError):
        ScenarioConfig.from_dict({"scenario": "E9", "seed": 0})
    with pytest.raises(ConfigError):
        ScenarioConfig.from_dict({"scenario": "E1", "seed": 0, "params": {"bogus": 1}})
    cfg = ScenarioConfig.from_dict({"scenario": "E4", "seed": 3, "params": {"N": 5000}})
    assert cfg.params["N"] == 5000 and cfg.params["n"] == DEFAULTS["E4"]["n"]
    again = ScenarioConfig.from_dict(cfg.to_dict())
    assert again.hash == cfg.hash
