import pytest
import yaml

from microgrid_dobc.config import BUILTIN_PROFILES, PROFILE_ENV, ConfigError, load_config, load_profile, resolve


def test_builtin_profiles():
    assert {"paper-appendix-a", "paper-hardware-b"} <= set(BUILTIN_PROFILES)


def test_defaults_resolve_to_lfc():
    cfg = resolve()
    assert cfg.loop == "lfc" and cfg.plant["droop_R"] == 2.4
    assert cfg.dt == 1e-3 and cfg.horizon == 40.0


def test_case_selects_loop():
    cfg = resolve(case="avr-b")
    assert cfg.loop == "avr" and cfg.controller["kp"] == pytest.approx(0.6568)


def test_file_overrides_profile(tmp_path):
    p = tmp_path / "c.yaml"
    p.write_text(yaml.safe_dump({"plant": {"droop_R": 3.0}, "observer": {"lam": 0.02}, "solver": {"dt": 5e-4}}))
    cfg = load_config(p)
    assert cfg.plant["droop_R"] == 3.0 and cfg.plant["t_gov"] == 0.0728
    assert cfg.observer == {"enabled": True, "lam": 0.02, "order": 3}
    assert cfg.dt == 5e-4


def test_overrides_beat_file(tmp_path):
    p = tmp_path / "c.yaml"
    p.write_text("seed: 3\nsolver: {horizon: 9}\n")
    cfg = load_config(p, seed=7, horizon=2.0)
    assert (cfg.seed, cfg.horizon) == (7, 2.0)


def test_missing_profile_named():
    with pytest.raises(ConfigError, match="no-such-profile"):
        load_profile("no-such-profile")


def test_profile_directory(tmp_path, monkeypatch):
    (tmp_path / "bench.yaml").write_text(
        yaml.safe_dump({"loop": "generic", "plant": {"num": [2.0], "den": [1.0, 1.0]}})
    )
    monkeypatch.setenv(PROFILE_ENV, str(tmp_path))
    cfg = resolve(profile="bench")
    assert cfg.loop == "generic" and cfg.plant_model().nominal().dc_gain() == 2.0


@pytest.mark.parametrize(
    "raw,field",
    [
        ({"solver": {"dt": 0}}, "solver.dt"),
        ({"solver": {"horizon": -1}}, "solver.horizon"),
        ({"loop": "hvdc"}, "loop"),
        ({"plant": {"bogus": 1}}, "plant"),
        ({"controller": {"ki": -1}}, "controller"),
        ({"scenario": {"case": "lfc-q"}}, "scenario.case"),
        ({"loop": "avr", "scenario": {"case": "lfc-b"}}, "scenario.case"),
    ],
)
def test_invalid_fields_named(raw, field):
    with pytest.raises(ConfigError) as exc:
        resolve(raw)
    assert exc.value.field == field


def test_unreadable_and_invalid_yaml(tmp_path):
    with pytest.raises(ConfigError):
        load_config(tmp_path / "missing.yaml")
    bad = tmp_path / "bad.yaml"
    bad.write_text("plant: [unclosed\n")
    with pytest.raises(ConfigError, match="YAML"):
        load_config(bad)


def test_round_trip_through_dict():
    cfg = resolve(case="lfc-c", seed=5)
    again = resolve(cfg.as_dict())
    assert again.as_dict() == cfg.as_dict()


def test_baseline_switch():
    cfg = resolve(case="lfc-b")
    assert cfg.closed_loop(dobc=False).observer is None
    assert cfg.closed_loop().observer.order == 3


def test_hardware_profile():
    cfg = resolve(profile="paper-hardware-b")
    assert cfg.observer["order"] == 2 and cfg.controller["ki"] == 0.01
