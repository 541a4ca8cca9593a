from dataclasses import dataclass
import json
import logging
import math
from pathlib import Path
from typing import (
    Any,
    Dict,
    List,
    Mapping,
    Optional,
    Sequence,
    Tuple,
    Union,
)

import jsonschema
import pandas as pd

from squidbench import __version__
from squidbench.acquisition import (
    AcquisitionMode,
    EventCapture,
    dense_campaign,
    load_captures,
    sparse_campaign,
)
from squidbench.analysis import (
    EventFeatures,
    analyze_captures,
    extract_features,
    write_features,
)
from squidbench.classification import (
    NO_TRUTH,
    ClassifiedEvent,
    beam_correlation,
    classified_frame,
    classify_events,
    confusion_matrix,
    duration_fdr,
    mix_ratio,
    off_diagonal_fraction,
    read_classified,
    write_classified,
)
from squidbench.config import (
    CampaignConfig,
    config_from_dict,
    config_to_dict,
)
from squidbench.device import (
    SampleClock,
    render_channels,
    synthesize_drive,
)
from squidbench.injection import (
    BeamSchedule,
    FaultKind,
    InjectionPlan,
    Species,
    apply_plan,
    fixed_plan,
    ground_truth,
    match_truth,
    sample_arrivals,
)
from squidbench.plots import plot_campaign
from squidbench.statistics import (
    FluenceLedger,
    cross_section,
    cross_section_curve,
    curve_frame,
    flatness_test,
    gamma_inclusive_sigma,
    write_curve,
)
from squidbench.utils.errors import (
    ConfigError,
    InvalidInputError,
)
from squidbench.utils.file import (
    read_json,
    write_json,
    write_manifest,
)
from squidbench.utils.trace_file import write_trace

SCHEMA_VERSION = "2"
SCHEMA_PATH = Path(__file__).parent / "schemas" / "report.schema.json"

CAPTURES_DIR = "captures"
PLAN_CSV = "plan.csv"
FEATURES_CSV = "features.csv"
CLASSIFIED_CSV = "classified.csv"
CURVE_CSV = "xsec_curve.csv"
REPORT_JSON = "report.json"
SUMMARY_TXT = "summary.txt"


def primary_species(schedule: BeamSchedule) -> List[Species]:
    """Species whose fluence normalizes the cross section: the neutrons when present, else everything."""
    present = schedule.species_present()
    neutrons = [species for species in present if species.is_neutron]
    return neutrons or present


def _finite(value: Optional[float]) -> Optional[float]:
    if value is None or not math.isfinite(value):
        return None
    return float(value)


def validate_report(report: Mapping[str, Any]) -> None:
    with open(SCHEMA_PATH, "r", encoding="utf-8") as f:
        schema = json.load(f)
    try:
        jsonschema.validate(instance=report, schema=schema)
    except jsonschema.ValidationError as error:
        raise InvalidInputError(f"report does not match schema version {SCHEMA_VERSION}: {error.message}") from error


def truth_pairs(events: Sequence[ClassifiedEvent], plan: InjectionPlan, clock: SampleClock) -> Tuple[List[Tuple[str, str]], int]:
    """(injected label, assigned class) per captured event and the number of injections never captured."""
    rows = ground_truth(plan, clock)
    matched = set()
    pairs = []
    for event in events:
        row = match_truth(rows, clock.index_of(event.features.trigger_time_s))
        if row is None:
            pairs.append((NO_TRUTH, event.klass.value))
        else:
            matched.add(row.entry_index)
            pairs.append((row.label.value, event.klass.value))
    return pairs, len(rows) - len(matched)


def statistics_section(events: Sequence[ClassifiedEvent], cfg: CampaignConfig) -> Dict[str, Any]:
    schedule = cfg.schedule
    settings = cfg.statistics
    species = primary_species(schedule)
    ledger = FluenceLedger(schedule, species, full_spectrum=settings.full_spectrum)
    other = FluenceLedger(schedule, species, full_spectrum=not settings.full_spectrum)

    times = sorted(event.features.trigger_time_s for event in events if event.klass.is_radiation)
    n_events = len(times)
    curve = cross_section_curve(times, ledger, settings.confidence) if ledger.total > 0 else []

    section: Dict[str, Any] = {
        "fluence": {
            "species": [item.value for item in species],
            "full_spectrum": settings.full_spectrum,
            "total_cm2": ledger.total,
            "other_convention_cm2": other.total,
            "per_species_cm2": {
                item.value: FluenceLedger(schedule, [item], settings.full_spectrum).total for item in schedule.species_present()
            },
        },
        "cross_section": None,
        "cross_section_other_convention": None,
        "gamma_inclusive_sigma_cm2": None,
        "flatness": None,
    }
    if ledger.total > 0:
        section["cross_section"] = cross_section(n_events, ledger.total, settings.confidence).as_dict()
        section["flatness"] = flatness_test(times, ledger, settings.flatness_bins).as_dict()
    else:
        logging.warning(f"No fluence of {[item.value for item in species]} in {schedule.name}; cross section is undefined")
    if other.total > 0:
        section["cross_section_other_convention"] = cross_section(n_events, other.total, settings.confidence).as_dict()

    gammas = [item for item in schedule.species_present() if not item.is_neutron]
    if gammas and any(item.is_neutron for item in species) and ledger.total > 0:
        section["gamma_inclusive_sigma_cm2"] = gamma_inclusive_sigma(n_events, ledger, FluenceLedger(schedule, gammas))
    section["_curve"] = curve
    return section


def build_report(
    cfg: CampaignConfig,
    plan: InjectionPlan,
    events: Sequence[ClassifiedEvent],
    captures: int,
) -> Tuple[Dict[str, Any], list]:
    schedule = cfg.schedule
    stats = statistics_section(events, cfg)
    curve = stats.pop("_curve")

    radiation = [event for event in events if event.klass.is_radiation]
    pairs, missed = truth_pairs(events, plan, cfg.clock)
    matrix = confusion_matrix(pairs)
    fdr = duration_fdr(events)

    injected = {kind.value: 0 for kind in FaultKind}
    for entry in plan.entries:
        injected[entry.kind.value] += 1

    report = {
        "schema_version": SCHEMA_VERSION,
        "version": __version__,
        "config": config_to_dict(cfg),
        "campaign": {
            "name": cfg.name,
            "facility": cfg.facility,
            "span_s": schedule.span_s,
            "on_time_s": schedule.on_time(),
            "off_time_s": schedule.off_time(),
            "captures": captures,
            "injected": injected,
            "missed_injections": missed,
            "dose_runs": [config_to_dict(run) for run in schedule.dose_runs],
        },
        **stats,
        "mix": mix_ratio(radiation).as_dict() if radiation else None,
        "beam_correlation": beam_correlation(events, schedule).as_dict(),
        "duration_fdr": _finite(fdr),
        "duration_fdr_infinite": fdr is not None and math.isinf(fdr),
        "confusion_matrix": matrix,
        "off_diagonal_fraction": off_diagonal_fraction(matrix),
        "conventions": {
            **cfg.analysis.conventions(),
            "duration_boundary_s": cfg.classifier.duration_boundary_s,
            "amplitude_margin_factor": cfg.classifier.amplitude_margin_factor,
        },
    }
    return report, curve


def generator_sigma(cfg: CampaignConfig) -> Optional[float]:
    species = primary_species(cfg.schedule)
    values = [cfg.sigma.get(item, 0.0) for item in species]
    return values[0] if values and len(set(values)) == 1 else None


def run_campaign(cfg: CampaignConfig, save_captures: bool = True) -> Dict[str, Any]:
    out_dir = cfg.output_dir
    out_dir.mkdir(parents=True, exist_ok=True)
    logging.info(f"Running campaign {cfg.name} (seed {cfg.seed}) into {out_dir}")

    plan = sample_arrivals(cfg.schedule, cfg.sigma, cfg.spurious, cfg.seed, cfg.faults)
    plan.write_csv(out_dir / PLAN_CSV)

    campaign = dense_campaign if cfg.acquisition.mode is AcquisitionMode.DENSE else sparse_campaign
    captures = campaign(
        cfg.schedule,
        plan,
        cfg.device,
        cfg.trigger,
        drive=cfg.drive,
        clock=cfg.clock,
        window=cfg.window,
        seed=cfg.seed,
        acquisition=cfg.acquisition,
        facility=cfg.facility,
    )

    features: List[EventFeatures] = []
    for capture in captures:
        if save_captures:
            capture.save(out_dir / CAPTURES_DIR)
        features.append(extract_features(capture, cfg.analysis))
        logging.debug(f"Capture {capture.capture_id} at {capture.trigger_time_s:.6f} s analyzed")
    logging.info(f"Acquired and analyzed {len(features)} captures")

    write_features(out_dir / FEATURES_CSV, features)
    events = classify_events(features, cfg.classifier, cfg.schedule)
    write_classified(out_dir / CLASSIFIED_CSV, events)

    report, curve = build_report(cfg, plan, events, len(features))
    write_curve(out_dir / CURVE_CSV, curve)
    validate_report(report)
    write_json(out_dir / REPORT_JSON, report)

    plot_campaign(out_dir, cfg.schedule, classified_frame(events), curve_frame(curve), report["mix"], generator_sigma(cfg))
    write_manifest(out_dir)
    return report


def analyze_directory(
    captures_dir: Union[str, Path],
    out_dir: Optional[Union[str, Path]] = None,
    cfg: Optional[CampaignConfig] = None,
) -> List[ClassifiedEvent]:
    cfg = cfg or CampaignConfig()
    captures_dir = Path(captures_dir)
    out_dir = Path(out_dir) if out_dir is not None else captures_dir
    out_dir.mkdir(parents=True, exist_ok=True)

    captures: List[EventCapture] = load_captures(captures_dir)
    features = analyze_captures(captures, cfg.analysis)
    write_features(out_dir / FEATURES_CSV, features)
    events = classify_events(features, cfg.classifier, cfg.schedule if _fits(captures, cfg.schedule) else None)
    write_classified(out_dir / CLASSIFIED_CSV, events)
    logging.info(f"Analyzed {len(captures)} captures from {captures_dir}")
    return events


def _fits(captures: Sequence[EventCapture], schedule: BeamSchedule) -> bool:
    return all(0 <= capture.trigger_time_s <= schedule.span_s for capture in captures)


def cross_section_from_classified(
    classified_csv: Union[str, Path],
    cfg: CampaignConfig,
    out_dir: Optional[Union[str, Path]] = None,
) -> Dict[str, Any]:
    events = read_classified(classified_csv)
    stats = statistics_section(events, cfg)
    curve = stats.pop("_curve")
    out_dir = Path(out_dir) if out_dir is not None else Path(classified_csv).parent
    out_dir.mkdir(parents=True, exist_ok=True)
    write_curve(out_dir / CURVE_CSV, curve)
    return stats


def _format(value: Optional[float], spec: str = ".3e") -> str:
    return "n/a" if value is None else format(value, spec)


def summarize(report: Mapping[str, Any]) -> str:
    campaign = report["campaign"]
    lines = [
        f"Campaign {campaign['name']} at {campaign['facility']} (squidbench {report['version']})",
        f"Span {campaign['span_s']:.0f} s, beam ON {campaign['on_time_s']:.0f} s, OFF {campaign['off_time_s']:.0f} s",
        f"Captures: {campaign['captures']}, missed injections: {campaign['missed_injections']}",
        f"Fluence ({', '.join(report['fluence']['species'])}): {report['fluence']['total_cm2']:.4e} cm^-2",
    ]
    sigma = report["cross_section"]
    if sigma is not None:
        lines.append(
            f"Cross section: {_format(sigma['sigma_cm2'])} cm^2 "
            f"[{_format(sigma['ci_low_cm2'])}, {_format(sigma['ci_high_cm2'])}] "
            f"from {sigma['n_events']} events, 1 s.e. {_format(sigma['std_error_cm2'])}",
        )
    if report["gamma_inclusive_sigma_cm2"] is not None:
        lines.append(f"Gamma-inclusive cross section: {_format(report['gamma_inclusive_sigma_cm2'])} cm^2")
    if report["flatness"] is not None:
        flatness = report["flatness"]
        lines.append(f"Flatness: t = {flatness['t_statistic']:.2f}, consistent with zero: {flatness['consistent_with_zero']}")
    mix = report["mix"]
    if mix is not None:
        lines.append(f"Mix: {mix['peak_pct']:.1f}% peak, {mix['burst_pct']:.1f}% burst")

    lines.append("")
    lines.append(f"{'class':<22}{'ON':>6}{'OFF':>6}{'ON/h':>10}{'OFF/h':>10}{'ON/OFF':>10}")
    for name, rates in report["beam_correlation"]["classes"].items():
        ratio = "inf" if rates["ratio_infinite"] else _format(rates["ratio"], ".2f")
        lines.append(
            f"{name:<22}{rates['count_on']:>6}{rates['count_off']:>6}"
            f"{rates['rate_on_per_h']:>10.3f}{_format(rates['rate_off_per_h'], '.3f'):>10}{ratio:>10}",
        )
    return "\n".join(lines) + "\n"


def report_directory(run_dir: Union[str, Path]) -> str:
    run_dir = Path(run_dir)
    report_path = run_dir / REPORT_JSON
    if not report_path.exists():
        raise InvalidInputError(f"{run_dir} holds no {REPORT_JSON}")

    report = read_json(report_path)
    validate_report(report)
    try:
        cfg = config_from_dict(report["config"])
    except ConfigError as error:
        raise InvalidInputError(f"{report_path}: embedded config is invalid ({error})") from error

    classified = pd.read_csv(run_dir / CLASSIFIED_CSV)
    curve = pd.read_csv(run_dir / CURVE_CSV)
    plot_campaign(run_dir, cfg.schedule, classified, curve, report["mix"], generator_sigma(cfg))

    summary = summarize(report)
    with open(run_dir / SUMMARY_TXT, "w", encoding="utf-8") as f:
        f.write(summary)
    write_manifest(run_dir)
    return summary


@dataclass(frozen=True)
class SynthResult:
    trace_path: Path
    plan_path: Path
    samples: int
    events: int


def synthesize(
    cfg: CampaignConfig,
    duration_s: float,
    counts: Mapping[FaultKind, int],
    out_dir: Optional[Union[str, Path]] = None,
) -> SynthResult:
    total = sum(counts.values())
    if not duration_s > 0:
        raise InvalidInputError(f"duration must be positive, got {duration_s}")

    out_dir = Path(out_dir) if out_dir is not None else cfg.output_dir
    out_dir.mkdir(parents=True, exist_ok=True)
    clock = SampleClock(dt_ns=cfg.clock.dt_ns)
    spacing = duration_s / max(total, 1)
    plan = fixed_plan(counts, spacing, cfg.seed, cfg.faults, cfg.spurious)

    drive = synthesize_drive(cfg.drive, clock, duration_s)
    channels = render_channels(drive, cfg.device, cfg.seed, clock=clock)
    channels, _ = apply_plan(channels, plan)

    trace_path = out_dir / "synth.bin"
    plan_path = out_dir / PLAN_CSV
    write_trace(trace_path, channels, cfg.device.readout_gain)
    plan.write_csv(plan_path)
    write_manifest(out_dir)
    logging.info(f"Synthesized {len(channels)} samples with {total} events into {trace_path}")
    return SynthResult(trace_path=trace_path, plan_path=plan_path, samples=len(channels), events=total)
