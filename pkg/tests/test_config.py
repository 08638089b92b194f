import pytest
from hypothesis import given, strategies as st

from hesaw.config import (SCHEMA_VERSION, ConfigError, ScenarioConfig, default_config_text,
                          load_config, parse_config)


def test_defaults_round_trip():
    cfg = parse_config(default_config_text())
    assert cfg.to_dict() == ScenarioConfig().to_dict()
    assert cfg.scenario_hash() == ScenarioConfig().scenario_hash()


def test_missing_version():
    with pytest.raises(ConfigError, match="version") as info:
        parse_config("[film]\npoints = 10\n")
    assert info.value.line == 1


def test_wrong_version():
    with pytest.raises(ConfigError, match="unsupported schema version"):
        parse_config(f"version = {SCHEMA_VERSION + 1}\n")


def test_unknown_key_reports_line():
    text = "version = 1\n\n[film]\npoints = 10\nbogus = 3\n"
    with pytest.raises(ConfigError, match="bogus") as info:
        parse_config(text, "s.toml")
    assert info.value.line == 5
    assert str(info.value).startswith("s.toml:5:")


def test_unknown_section_reports_line():
    with pytest.raises(ConfigError, match="nonsense") as info:
        parse_config("version = 1\n[nonsense]\na = 1\n")
    assert info.value.line == 2


@pytest.mark.parametrize("key,value", [("points", '"many"'), ("H_ref_m", "true"), ("points", "1.5")])
def test_type_errors(key, value):
    with pytest.raises(ConfigError, match=key) as info:
        parse_config(f"version = 1\n[film]\n{key} = {value}\n")
    assert info.value.line == 3


def test_enum_checked():
    with pytest.raises(ConfigError, match="scheme"):
        parse_config('version = 1\n[pump]\nscheme = "rk4"\n')


def test_integer_accepted_for_float():
    cfg = parse_config("version = 1\n[biases]\nV_g = 90\n")
    assert cfg.biases.V_g == 90.0 and isinstance(cfg.biases.V_g, float)


def test_physics_validation():
    with pytest.raises(ConfigError, match="invalid scenario"):
        parse_config('version = 1\n[pump]\ndetector = "nowhere"\n')
    with pytest.raises(ConfigError, match="invalid scenario"):
        parse_config("version = 1\n[txline]\nnoise_rel = -0.1\n")


def test_syntax_error_line():
    with pytest.raises(ConfigError, match="syntax") as info:
        parse_config("version = 1\n[film\n")
    assert info.value.line == 2


def test_load_none_is_defaults(tmp_path):
    assert load_config(None).scenario_hash() == ScenarioConfig().scenario_hash()
    p = tmp_path / "c.toml"
    p.write_text(default_config_text())
    assert load_config(p).scenario_hash() == ScenarioConfig().scenario_hash()


def test_source_does_not_enter_hash():
    a = parse_config("version = 1\n", "a.toml")
    b = parse_config("version = 1\n", "b.toml")
    assert a.scenario_hash() == b.scenario_hash()


@given(st.floats(10.0, 200.0, allow_nan=False))
def test_hash_tracks_content(v):
    a = parse_config(f"version = 1\n[biases]\nV_g = {v!r}\n")
    b = parse_config(f"version = 1\n[biases]\nV_g = {v!r}\n")
    assert a.scenario_hash() == b.scenario_hash()
    if v != 80.0:
        assert a.scenario_hash() != ScenarioConfig().scenario_hash()


def test_builders():
    cfg = ScenarioConfig()
    assert cfg.layout().names == ("source", "gate", "drain")
    sc = cfg.pump_scenario(power_w=2e-3)
    assert sc.drive.power_in == 2e-3 and sc.detector == "source"
    assert cfg.mobility() > 0 and cfg.n_total() > 0
