"""End-to-end tests of the command line: campaign, re-analysis, cross section, report, synth and transport."""
import json
from pathlib import Path

import pandas as pd
import pytest

from squidbench.__main__ import main
from squidbench.campaign import (
    CLASSIFIED_CSV,
    CURVE_CSV,
    FEATURES_CSV,
    PLAN_CSV,
    REPORT_JSON,
    SUMMARY_TXT,
    validate_report,
)
from squidbench.plots import (
    CROSS_SECTION_SVG,
    DEPOSITION_SVG,
    MIX_SVG,
    SCATTER_SVG,
    TIMELINE_SVG,
)
from squidbench.utils.errors import InvalidInputError
from squidbench.utils.file import (
    MANIFEST_NAME,
    read_json,
)


@pytest.fixture(scope="module")
def desk_run(tmp_path_factory, desk_config_path) -> Path:
    out_dir = tmp_path_factory.mktemp("run")
    assert main(["campaign", "--config", str(desk_config_path), "--out", str(out_dir)]) == 0
    return out_dir


def test_missing_command():
    assert main([]) == 1


def test_unknown_command():
    with pytest.raises(SystemExit) as error:
        main(["bogus"])
    assert error.value.code == 2


def test_missing_config_is_reported_as_json(tmp_path, capsys):
    assert main(["campaign", "--config", str(tmp_path / "missing.yaml")]) == 3
    lines = [line for line in capsys.readouterr().err.splitlines() if line.startswith("{")]
    error = json.loads(lines[-1])
    assert error["status"] == "error"
    assert error["error"] == "ConfigError"


def test_campaign_writes_its_artifacts(desk_run):
    for name in (PLAN_CSV, FEATURES_CSV, CLASSIFIED_CSV, CURVE_CSV, REPORT_JSON, MANIFEST_NAME):
        assert (desk_run / name).exists()

    report = read_json(desk_run / REPORT_JSON)
    validate_report(report)
    assert report["campaign"]["name"] == "desk"
    assert report["campaign"]["captures"] == len(pd.read_csv(desk_run / FEATURES_CSV))
    assert report["conventions"]["local_variation"] == "peak_to_peak"

    manifest = read_json(desk_run / MANIFEST_NAME)
    assert REPORT_JSON in manifest


def test_campaign_rerun_is_byte_identical(desk_run, desk_config_path):
    first = (desk_run / REPORT_JSON).read_bytes()
    assert main(["campaign", "--config", str(desk_config_path), "--out", str(desk_run)]) == 0
    assert (desk_run / REPORT_JSON).read_bytes() == first


def test_report_schema_rejects_unknown_fields(desk_run):
    report = read_json(desk_run / REPORT_JSON)
    report["extra"] = 1
    with pytest.raises(InvalidInputError):
        validate_report(report)


def test_reanalysis_matches_the_campaign(desk_run, desk_config_path, tmp_path):
    assert main(["analyze", str(desk_run / "captures"), "--config", str(desk_config_path), "--out", str(tmp_path)]) == 0
    assert (tmp_path / FEATURES_CSV).read_bytes() == (desk_run / FEATURES_CSV).read_bytes()
    assert (tmp_path / CLASSIFIED_CSV).exists()


def test_analyze_empty_directory(desk_config_path, tmp_path):
    captures = tmp_path / "captures"
    captures.mkdir()
    assert main(["analyze", str(captures), "--config", str(desk_config_path), "--out", str(tmp_path)]) == 0
    assert pd.read_csv(tmp_path / FEATURES_CSV).empty
    assert pd.read_csv(tmp_path / CLASSIFIED_CSV).empty


def test_report_mix_matches_classified(desk_run):
    report = read_json(desk_run / REPORT_JSON)
    classes = pd.read_csv(desk_run / CLASSIFIED_CSV)["class"].tolist()
    peaks = classes.count("radiation_peak")
    bursts = classes.count("radiation_burst")
    if peaks + bursts == 0:
        assert report["mix"] is None
        return
    assert report["mix"]["peak_count"] == peaks
    assert report["mix"]["burst_count"] == bursts
    assert report["mix"]["peak_pct"] == pytest.approx(100.0 * peaks / (peaks + bursts))


def test_cross_section_from_classified(desk_run, desk_config_path, tmp_path, capsys):
    assert main(["xsec", str(desk_run / CLASSIFIED_CSV), "--config", str(desk_config_path), "--out", str(tmp_path)]) == 0
    stats = json.loads(capsys.readouterr().out)
    assert stats["fluence"]["total_cm2"] == pytest.approx(2e5 * 0.04)
    assert (tmp_path / CURVE_CSV).exists()


def test_report_redraws_the_figures(desk_run):
    assert main(["report", str(desk_run)]) == 0
    assert (desk_run / SUMMARY_TXT).read_text(encoding="utf-8").startswith("Campaign desk")
    for name in (TIMELINE_SVG, CROSS_SECTION_SVG, SCATTER_SVG, MIX_SVG):
        assert (desk_run / name).read_text(encoding="utf-8").lstrip().startswith("<?xml")


def test_report_needs_a_run(tmp_path):
    assert main(["report", str(tmp_path)]) == 3


def test_synth(desk_config_path, tmp_path):
    assert main(["synth", "--config", str(desk_config_path), "--out", str(tmp_path), "--duration-s", "0.005", "--oscillating", "0"]) == 0
    plan = pd.read_csv(tmp_path / PLAN_CSV)
    # the desk configuration only defines a sawtooth spurious template
    assert len(plan) == 5
    assert (tmp_path / "synth.bin").stat().st_size > 0


def test_transport(desk_config_path, tmp_path):
    assert main(["transport", "--config", str(desk_config_path), "--out", str(tmp_path), "--count", "400"]) == 0
    ratios = read_json(tmp_path / "ratios.json")
    assert ratios["primaries_per_species"] == 400
    assert set(ratios["ratios"]) == {"substrate_energy", "film_phonons", "film_hit_primaries", "absorption_time_p99_5"}
    assert (tmp_path / DEPOSITION_SVG).exists()
    assert (tmp_path / "tally_neutron.json").exists()


@pytest.mark.slow
def test_default_campaign_end_to_end(tmp_path):
    assert main(["campaign", "--preset", "nile-e1", "--out", str(tmp_path), "--no-captures"]) == 0
    report = read_json(tmp_path / REPORT_JSON)
    assert report["campaign"]["missed_injections"] == 0
    assert report["cross_section"]["ci_low_cm2"] <= 2e-9 <= report["cross_section"]["ci_high_cm2"]
    assert report["off_diagonal_fraction"] <= 0.05
