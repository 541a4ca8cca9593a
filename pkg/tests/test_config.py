"""Tests for YAML configuration, presets and their resolution order."""
import pytest

from squidbench.acquisition import TriggerPolarity
from squidbench.config import (
    CONFIG_ENV,
    CampaignConfig,
    available_presets,
    config_from_dict,
    config_to_dict,
    load_config_file,
    load_preset,
    resolve_config,
)
from squidbench.injection import Species
from squidbench.utils.errors import ConfigError


def test_shipped_presets():
    assert available_presets() == ["calliope-e3", "chipir-e2", "nile-e1", "transport-calibrated"]


@pytest.mark.parametrize("name", ["calliope-e3", "chipir-e2", "nile-e1", "transport-calibrated"])
def test_presets_load(name):
    cfg = load_preset(name)
    assert isinstance(cfg, CampaignConfig)
    assert cfg.name == name


def test_unknown_preset():
    with pytest.raises(ConfigError):
        load_preset("lhc")


def test_nile_preset():
    cfg = load_preset("nile-e1")
    assert cfg.trigger.threshold_mv == 30.0
    assert cfg.trigger.polarity is TriggerPolarity.ABSOLUTE
    assert cfg.schedule.span_s == 21600.0
    assert cfg.sigma[Species.NEUTRON_14MEV] == 2e-9


def test_gamma_preset_injects_no_neutrons():
    cfg = load_preset("calliope-e3")
    assert cfg.schedule.species_present() == [Species.GAMMA_1_25MEV]
    assert Species.NEUTRON_14MEV not in cfg.sigma
    assert len(cfg.schedule.dose_runs) == 5


def test_overlay_keeps_unnamed_settings():
    cfg = config_from_dict({"trigger": {"threshold_mv": 20.0}})
    assert cfg.trigger.threshold_mv == 20.0
    assert cfg.trigger.dead_time_s == CampaignConfig().trigger.dead_time_s


@pytest.mark.parametrize(
    "data",
    [
        {"trigger": {"threshold": 3.0}},
        {"colour": "blue"},
        {"trigger": {"polarity": "sideways"}},
        {"trigger": {"threshold_mv": 0.0}},
        {"trigger": {"threshold_mv": "high"}},
        {"statistics": {"full_spectrum": "sometimes"}},
        {"seed": 1.5},
        {"window": "wide"},
        {"transport": {"geometry": {"substrate_mm": [1.0, 2.0]}}},
    ],
)
def test_invalid_settings_are_config_errors(data):
    with pytest.raises(ConfigError):
        config_from_dict(data)


def test_exponents_without_a_dot_are_numbers():
    cfg = config_from_dict({"trigger": {"dead_time_s": "1e-3"}})
    assert cfg.trigger.dead_time_s == 1e-3


def test_config_survives_a_dict_round_trip():
    cfg = load_preset("nile-e1")
    assert config_from_dict(config_to_dict(cfg)) == cfg


def test_missing_and_malformed_files(tmp_path):
    with pytest.raises(ConfigError):
        load_config_file(tmp_path / "missing.yaml")

    broken = tmp_path / "broken.yaml"
    broken.write_text("trigger: [unclosed", encoding="utf-8")
    with pytest.raises(ConfigError):
        load_config_file(broken)


def test_resolution_order(monkeypatch, desk_config_path):
    monkeypatch.delenv(CONFIG_ENV, raising=False)
    assert resolve_config().name == "nile-e1"
    assert resolve_config(preset="chipir-e2").name == "chipir-e2"

    monkeypatch.setenv(CONFIG_ENV, str(desk_config_path))
    assert resolve_config().name == "desk"
    assert resolve_config(preset="nile-e1").name == "nile-e1"

    with pytest.raises(ConfigError):
        resolve_config(config_path=str(desk_config_path), preset="nile-e1")


def test_flags_override_the_file(desk_config_path, tmp_path):
    cfg = resolve_config(config_path=str(desk_config_path), seed=11, output=str(tmp_path))
    assert cfg.seed == 11
    assert cfg.output_dir == tmp_path
    assert cfg.transport.count == 400


def test_config_errors_name_the_setting():
    with pytest.raises(ConfigError, match=r"trigger\.threshold"):
        config_from_dict({"trigger": {"threshold": 3.0}})
    with pytest.raises(ConfigError, match=r"transport\.cascade\.max_tracked"):
        config_from_dict({"transport": {"cascade": {"max_tracked": "many"}}})


def test_config_section_keys_are_replaced_wholesale():
    cfg = config_from_dict({"sigma": {"gamma_1.25MeV": 1e-10}})
    assert cfg.sigma == {Species.GAMMA_1_25MEV: 1e-10}
