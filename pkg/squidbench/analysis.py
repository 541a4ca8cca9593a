"""Feature extraction on a single capture: reference baseline, onset, end and rolling amplitude."""
from dataclasses import (
    asdict,
    dataclass,
)
from enum import Enum
import logging
import math
from pathlib import Path
from typing import (
    Any,
    Dict,
    Iterable,
    List,
    Optional,
    Tuple,
    Union,
)

from joblib import (
    Parallel,
    delayed,
)
import numpy as np
import pandas as pd
from scipy.ndimage import (
    maximum_filter1d,
    minimum_filter1d,
    uniform_filter1d,
)

from squidbench.acquisition import EventCapture
from squidbench.utils.errors import InvalidInputError
from squidbench.utils.settings import settings_section

CONVENTION_VERSION = "1"

FEATURE_COLUMNS = [
    "capture_id",
    "trigger_time_s",
    "onset_s",
    "end_s",
    "end_undetermined",
    "duration_s",
    "max_amp_mV",
    "max_excursion_mV",
    "channels",
    "shape_tag",
    "onset_flagged",
    "dirty_baseline",
    "truncated",
    "threshold_mV",
]


class ChannelsAffected(Enum):
    VOLTAGE_ONLY = "voltage_only"
    BOTH = "both"


class ShapeTag(Enum):
    RAMP = "ramp"
    OSCILLATION = "oscillation"
    PULSE = "pulse"
    TELEGRAPH = "telegraph"
    OTHER = "other"


@settings_section
@dataclass(frozen=True)
class AnalysisConfig:
    k_sigma: float = 5.0
    quiet_run_s: float = 1e-6
    end_window_s: float = 80e-6
    end_stride_s: float = 100e-9
    k_mean: float = 4.0
    k_sigma_ratio: float = 2.0
    rolling_width_s: float = 100e-9
    dirty_sigma_voltage: float = 5.0
    dirty_sigma_current: float = 0.02
    min_departure_samples: int = 3
    sigma_floor: float = 1e-4
    lobe_fraction: float = 0.25
    ramp_ratio: float = 4.0
    plateau_fraction: float = 0.8
    n_jobs: int = 1

    def __post_init__(self) -> None:
        positive = (self.k_sigma, self.quiet_run_s, self.end_window_s, self.end_stride_s, self.k_mean, self.rolling_width_s)
        if any(not value > 0 for value in positive) or self.k_sigma_ratio < 1:
            raise InvalidInputError("analysis tolerances and windows must be positive")

    def conventions(self) -> Dict[str, Any]:
        return {
            "version": CONVENTION_VERSION,
            "local_variation": "peak_to_peak",
            "compatibility_test": "window mean within k_mean*sigma/sqrt(n) and sigma within factor k_sigma_ratio, both channels",
            "current_detrending": "reference window folded modulo the drive period",
            **{key: value for key, value in asdict(self).items() if key != "n_jobs"},
        }


@dataclass(frozen=True, eq=False)
class BaselineStats:
    mean_current: float
    sigma_current: float
    mean_voltage: float
    sigma_voltage: float
    period_samples: int
    current_template: np.ndarray
    voltage_template: np.ndarray
    dirty: bool = False

    def residuals(self, capture: EventCapture) -> Tuple[np.ndarray, np.ndarray]:
        phase = np.arange(len(capture)) % len(self.voltage_template)
        current = capture.current_samples.astype(np.float64) - self.current_template[phase]
        voltage = capture.voltage_samples.astype(np.float64) - self.voltage_template[phase]
        return current, voltage


def _fold(reference: np.ndarray, period: int) -> Tuple[np.ndarray, float]:
    if period < 1 or len(reference) < 2 * period:
        template = np.array([reference.mean()])
        dof = len(reference) - 1
        residual = reference - template[0]
    else:
        phase = np.arange(len(reference)) % period
        template = np.bincount(phase, weights=reference, minlength=period) / np.bincount(phase, minlength=period)
        residual = reference - template[phase]
        dof = len(reference) - period
    sigma = math.sqrt(float(np.sum(residual**2)) / dof) if dof > 0 else 0.0
    return template, sigma


def drive_period_samples(capture: EventCapture) -> int:
    if not capture.drive_frequency_khz > 0:
        return 0
    return int(round(1.0 / (capture.drive_frequency_khz * 1e3 * capture.clock.dt)))


def reference_samples(capture: EventCapture) -> int:
    """The reference window is the first half of the pre-trigger samples; onsets are searched in the second half."""
    return capture.trigger_index // 2


def baseline(capture: EventCapture, cfg: Optional[AnalysisConfig] = None) -> BaselineStats:
    cfg = cfg or AnalysisConfig()
    reference = reference_samples(capture)
    if reference < 2:
        raise InvalidInputError(f"capture {capture.capture_id} is too short for a reference window")

    current = capture.current_samples[:reference].astype(np.float64)
    voltage = capture.voltage_samples[:reference].astype(np.float64)
    period = drive_period_samples(capture)
    current_template, sigma_current = _fold(current, period)
    voltage_template, sigma_voltage = _fold(voltage, period)

    dirty = sigma_voltage > cfg.dirty_sigma_voltage or sigma_current > cfg.dirty_sigma_current
    if dirty:
        logging.warning(f"Capture {capture.capture_id} has a dirty reference window (sigma_V = {sigma_voltage:.3f} mV)")

    return BaselineStats(
        mean_current=float(current.mean()),
        sigma_current=sigma_current,
        mean_voltage=float(voltage.mean()),
        sigma_voltage=sigma_voltage,
        period_samples=len(voltage_template),
        current_template=current_template,
        voltage_template=voltage_template,
        dirty=dirty,
    )


def _departures(capture: EventCapture, stats: BaselineStats, cfg: AnalysisConfig) -> Tuple[np.ndarray, np.ndarray]:
    current, voltage = stats.residuals(capture)
    voltage_limit = cfg.k_sigma * max(stats.sigma_voltage, cfg.sigma_floor)
    current_limit = cfg.k_sigma * max(stats.sigma_current, cfg.sigma_floor)
    return np.abs(current) > current_limit, np.abs(voltage) > voltage_limit


@dataclass(frozen=True)
class Onset:
    index: int
    time_s: float
    flagged: bool


def find_onset(capture: EventCapture, stats: BaselineStats, cfg: Optional[AnalysisConfig] = None) -> Onset:
    """Latest time in ``[-pre/2, 0]`` preceded by a quiet run of ``quiet_run_s`` on both channels."""
    cfg = cfg or AnalysisConfig()
    dt = capture.clock.dt
    run = max(1, int(round(cfg.quiet_run_s / dt)))
    trigger = capture.trigger_index
    earliest = reference_samples(capture)

    current_departed, voltage_departed = _departures(capture, stats, cfg)
    departed = (current_departed | voltage_departed).astype(np.int64)
    counts = np.concatenate(([0], np.cumsum(departed)))

    candidates = np.arange(max(earliest, run), trigger + 1)
    quiet = counts[candidates] - counts[candidates - run] == 0
    if not np.any(quiet):
        logging.warning(f"Capture {capture.capture_id}: no quiet run before the trigger, onset pinned to the search start")
        return Onset(index=earliest, time_s=float((earliest - trigger) * dt), flagged=True)

    index = int(candidates[np.flatnonzero(quiet)[-1]])
    return Onset(index=index, time_s=float((index - trigger) * dt), flagged=False)


@dataclass(frozen=True)
class End:
    index: Optional[int]
    time_s: Optional[float]

    @property
    def undetermined(self) -> bool:
        return self.index is None


def _window_moments(values: np.ndarray, starts: np.ndarray, width: int) -> Tuple[np.ndarray, np.ndarray]:
    first = np.concatenate(([0.0], np.cumsum(values)))
    second = np.concatenate(([0.0], np.cumsum(values**2)))
    mean = (first[starts + width] - first[starts]) / width
    variance = np.clip((second[starts + width] - second[starts]) / width - mean**2, 0.0, None)
    return mean, np.sqrt(variance)


def compatible_windows(capture: EventCapture, stats: BaselineStats, cfg: Optional[AnalysisConfig] = None) -> Tuple[np.ndarray, np.ndarray]:
    cfg = cfg or AnalysisConfig()
    dt = capture.clock.dt
    width = max(2, int(round(cfg.end_window_s / dt)))
    stride = max(1, int(round(cfg.end_stride_s / dt)))
    starts = np.arange(capture.trigger_index, len(capture) - width + 1, stride)
    if len(starts) == 0:
        return starts, np.zeros(0, dtype=bool)

    current, voltage = stats.residuals(capture)
    compatible = np.ones(len(starts), dtype=bool)
    for residual, sigma in ((current, stats.sigma_current), (voltage, stats.sigma_voltage)):
        floor = max(sigma, cfg.sigma_floor)
        mean, spread = _window_moments(residual, starts, width)
        compatible &= np.abs(mean) <= cfg.k_mean * floor / math.sqrt(width)
        compatible &= spread <= cfg.k_sigma_ratio * floor
        if sigma > cfg.sigma_floor:
            compatible &= spread >= sigma / cfg.k_sigma_ratio
    return starts, compatible


def find_end(capture: EventCapture, stats: BaselineStats, cfg: Optional[AnalysisConfig] = None) -> End:
    starts, compatible = compatible_windows(capture, stats, cfg)
    hits = np.flatnonzero(compatible)
    if len(hits) == 0:
        return End(index=None, time_s=None)

    index = int(starts[hits[0]])
    return End(index=index, time_s=float((index - capture.trigger_index) * capture.clock.dt))


@dataclass(frozen=True, eq=False)
class RollingAmplitude:
    width_samples: int
    series: np.ndarray
    max_amplitude: float


def rolling_series(values: np.ndarray, width: int) -> np.ndarray:
    """Peak-to-peak of every full window; entry ``k`` covers samples ``[k, k + width)``."""
    values = np.asarray(values, dtype=np.float64)
    if width < 1:
        raise InvalidInputError(f"rolling width must cover at least one sample, got {width}")
    if len(values) < width:
        return np.zeros(0)

    spread = maximum_filter1d(values, width, mode="nearest") - minimum_filter1d(values, width, mode="nearest")
    center = width // 2
    return spread[center:center + len(values) - width + 1]


def rolling_amplitude(
    capture: EventCapture,
    width: float = 100e-9,
    span: Optional[Tuple[int, int]] = None,
) -> RollingAmplitude:
    """Rolling voltage variation; the maximum runs over windows intersecting ``span`` (inclusive sample indices)."""
    if width < capture.clock.dt * (1 - 1e-9):
        raise InvalidInputError(f"rolling width {width} s is shorter than one sample")

    samples = max(1, int(round(width / capture.clock.dt)))
    series = rolling_series(capture.voltage_samples, samples)
    if len(series) == 0:
        return RollingAmplitude(width_samples=samples, series=series, max_amplitude=0.0)

    lo, hi = span if span is not None else (0, len(capture) - 1)
    first = max(0, lo - samples + 1)
    last = min(len(series) - 1, hi)
    maximum = float(series[first:last + 1].max()) if first <= last else 0.0
    return RollingAmplitude(width_samples=samples, series=series, max_amplitude=maximum)


def _lobes(residual: np.ndarray, fraction: float) -> Tuple[List[Tuple[int, int, int]], float]:
    peak = float(np.max(np.abs(residual))) if len(residual) else 0.0
    if peak == 0.0:
        return [], peak

    level = np.where(residual >= fraction * peak, 1, np.where(residual <= -fraction * peak, -1, 0))
    edges = np.flatnonzero(np.diff(level)) + 1
    bounds = np.concatenate(([0], edges, [len(level)]))
    lobes = [(int(lo), int(hi), int(level[lo])) for lo, hi in zip(bounds[:-1], bounds[1:]) if level[lo] != 0]
    return lobes, peak


def shape_tag(voltage_residual: np.ndarray, smoothing: int, cfg: Optional[AnalysisConfig] = None) -> ShapeTag:
    cfg = cfg or AnalysisConfig()
    smoothed = uniform_filter1d(voltage_residual, max(1, smoothing), mode="nearest")
    lobes, peak = _lobes(smoothed, cfg.lobe_fraction)
    if not lobes:
        return ShapeTag.OTHER

    signs = [sign for _, _, sign in lobes]
    alternating = all(a != b for a, b in zip(signs, signs[1:]))
    if len(lobes) >= 3 and alternating:
        return ShapeTag.OSCILLATION
    if len(lobes) >= 2:
        return ShapeTag.OTHER if alternating else ShapeTag.TELEGRAPH

    lo, hi, _ = lobes[0]
    magnitude = np.abs(smoothed[lo:hi])
    top = lo + int(np.argmax(magnitude))
    rise = top - lo + 1
    fall = hi - top
    if rise >= cfg.ramp_ratio * fall:
        return ShapeTag.RAMP

    plateau = np.count_nonzero(magnitude >= cfg.plateau_fraction * peak)
    if plateau > 0.5 * (hi - lo) and hi - lo >= 10 * smoothing:
        return ShapeTag.TELEGRAPH
    return ShapeTag.PULSE


@dataclass(frozen=True)
class EventFeatures:
    capture_id: int
    trigger_time_s: float
    onset_s: float
    end_s: Optional[float]
    duration_s: float
    # largest rolling peak-to-peak over the event
    max_amplitude_mv: float
    # largest departure from the reference mean over the event
    max_excursion_mv: float
    channels_affected: ChannelsAffected
    shape_tag: ShapeTag
    threshold_mv: float
    onset_flagged: bool = False
    dirty_baseline: bool = False
    truncated: bool = False

    @property
    def end_undetermined(self) -> bool:
        return self.end_s is None

    def to_row(self) -> Dict[str, Any]:
        return {
            "capture_id": self.capture_id,
            "trigger_time_s": self.trigger_time_s,
            "onset_s": self.onset_s,
            "end_s": math.nan if self.end_s is None else self.end_s,
            "end_undetermined": self.end_undetermined,
            "duration_s": self.duration_s,
            "max_amp_mV": self.max_amplitude_mv,
            "max_excursion_mV": self.max_excursion_mv,
            "channels": self.channels_affected.value,
            "shape_tag": self.shape_tag.value,
            "onset_flagged": self.onset_flagged,
            "dirty_baseline": self.dirty_baseline,
            "truncated": self.truncated,
            "threshold_mV": self.threshold_mv,
        }

    @classmethod
    def from_row(cls, row: Dict[str, Any]) -> "EventFeatures":
        undetermined = bool(row["end_undetermined"])
        return cls(
            capture_id=int(row["capture_id"]),
            trigger_time_s=float(row["trigger_time_s"]),
            onset_s=float(row["onset_s"]),
            end_s=None if undetermined else float(row["end_s"]),
            duration_s=float(row["duration_s"]),
            max_amplitude_mv=float(row["max_amp_mV"]),
            max_excursion_mv=float(row["max_excursion_mV"]),
            channels_affected=ChannelsAffected(row["channels"]),
            shape_tag=ShapeTag(row["shape_tag"]),
            threshold_mv=float(row["threshold_mV"]),
            onset_flagged=bool(row["onset_flagged"]),
            dirty_baseline=bool(row["dirty_baseline"]),
            truncated=bool(row["truncated"]),
        )


def extract_features(capture: EventCapture, cfg: Optional[AnalysisConfig] = None) -> EventFeatures:
    cfg = cfg or AnalysisConfig()
    dt = capture.clock.dt
    stats = baseline(capture, cfg)
    onset = find_onset(capture, stats, cfg)
    end = find_end(capture, stats, cfg)

    last = len(capture) - 1 if end.undetermined else end.index
    if end.undetermined:
        duration = (len(capture) - onset.index) * dt
    else:
        duration = (end.index - onset.index) * dt

    rolling = rolling_amplitude(capture, cfg.rolling_width_s, span=(onset.index, last))
    current_residual, voltage_residual = stats.residuals(capture)
    region = slice(onset.index, last + 1)
    voltage = capture.voltage_samples.astype(np.float64)
    excursion = float(np.max(np.abs(voltage[region] - stats.mean_voltage)))

    current_limit = cfg.k_sigma * max(stats.sigma_current, cfg.sigma_floor)
    current_departures = int(np.count_nonzero(np.abs(current_residual[region]) > current_limit))
    channels = ChannelsAffected.BOTH if current_departures >= cfg.min_departure_samples else ChannelsAffected.VOLTAGE_ONLY

    smoothing = max(1, int(round(cfg.rolling_width_s / dt)))
    padded = slice(max(0, onset.index - smoothing), min(len(capture), last + 1 + smoothing))
    tag = shape_tag(voltage_residual[padded], smoothing, cfg)

    features = EventFeatures(
        capture_id=capture.capture_id,
        trigger_time_s=capture.trigger_time_s,
        onset_s=onset.time_s,
        end_s=end.time_s,
        duration_s=float(duration),
        max_amplitude_mv=rolling.max_amplitude,
        max_excursion_mv=excursion,
        channels_affected=channels,
        shape_tag=tag,
        threshold_mv=capture.trigger.threshold_mv,
        onset_flagged=onset.flagged,
        dirty_baseline=stats.dirty,
        truncated=capture.truncated,
    )
    logging.debug(f"Capture {capture.capture_id}: {features}")
    return features


def analyze_captures(captures: Iterable[EventCapture], cfg: Optional[AnalysisConfig] = None) -> List[EventFeatures]:
    cfg = cfg or AnalysisConfig()
    captures = list(captures)
    if cfg.n_jobs == 1 or len(captures) < 2:
        return [extract_features(capture, cfg) for capture in captures]
    return Parallel(n_jobs=cfg.n_jobs)(delayed(extract_features)(capture, cfg) for capture in captures)


def features_frame(features: Iterable[EventFeatures]) -> pd.DataFrame:
    return pd.DataFrame([feature.to_row() for feature in features], columns=FEATURE_COLUMNS)


def write_features(path: Union[str, Path], features: Iterable[EventFeatures]) -> None:
    features_frame(features).to_csv(path, index=False, float_format="%.12g")


def read_features(path: Union[str, Path]) -> List[EventFeatures]:
    frame = pd.read_csv(path)
    return [EventFeatures.from_row(row) for row in frame.to_dict(orient="records")]
