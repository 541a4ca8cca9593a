from dataclasses import dataclass
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
    Sequence,
    Tuple,
    Union,
)

import numpy as np
import pandas as pd

from squidbench.analysis import (
    FEATURE_COLUMNS,
    ChannelsAffected,
    EventFeatures,
    ShapeTag,
)
from squidbench.injection import (
    BeamSchedule,
    EventClass,
    FaultKind,
)
from squidbench.statistics import poisson_ci
from squidbench.utils.errors import InvalidInputError
from squidbench.utils.settings import settings_section

SPURIOUS_SHAPES = {
    ShapeTag.RAMP: EventClass.SPURIOUS_SAWTOOTH,
    ShapeTag.OSCILLATION: EventClass.SPURIOUS_OSCILLATING,
}
CRITERIA_COLUMNS = ["amplitude_margin", "both_channels", "shape_incompatible_with_spurious", "beam_correlated"]
NO_TRUTH = "none"


class Verdict(Enum):
    RADIATION = "radiation"
    SPURIOUS = "spurious"
    UNKNOWN = "unknown"


@settings_section
@dataclass(frozen=True)
class ClassifierConfig:
    duration_boundary_s: float = 10e-6
    amplitude_margin_factor: float = 1.5

    def __post_init__(self) -> None:
        if not self.duration_boundary_s > 0:
            raise InvalidInputError(f"duration boundary must be positive, got {self.duration_boundary_s}")
        if not self.amplitude_margin_factor > 0:
            raise InvalidInputError("amplitude_margin_factor must be positive")


@dataclass(frozen=True)
class CriteriaScores:
    amplitude_margin: bool
    both_channels: bool
    shape_incompatible_with_spurious: bool
    beam_correlated: bool

    def as_dict(self) -> Dict[str, bool]:
        return {
            "amplitude_margin": self.amplitude_margin,
            "both_channels": self.both_channels,
            "shape_incompatible_with_spurious": self.shape_incompatible_with_spurious,
            "beam_correlated": self.beam_correlated,
        }


@dataclass(frozen=True)
class ClassifiedEvent:
    features: EventFeatures
    klass: EventClass
    criteria: CriteriaScores

    def __post_init__(self) -> None:
        if self.klass.is_radiation and not self.criteria.both_channels:
            raise InvalidInputError("radiation classes require both channels to be affected")

    def to_row(self) -> Dict[str, Any]:
        return {**self.features.to_row(), "class": self.klass.value, **self.criteria.as_dict()}

    @classmethod
    def from_row(cls, row: Dict[str, Any]) -> "ClassifiedEvent":
        return cls(
            features=EventFeatures.from_row(row),
            klass=EventClass(row["class"]),
            criteria=CriteriaScores(**{name: bool(row[name]) for name in CRITERIA_COLUMNS}),
        )


def criteria_scores(features: EventFeatures, cfg: ClassifierConfig, schedule: Optional[BeamSchedule] = None) -> CriteriaScores:
    return CriteriaScores(
        amplitude_margin=features.max_amplitude_mv >= cfg.amplitude_margin_factor * features.threshold_mv,
        both_channels=features.channels_affected is ChannelsAffected.BOTH,
        shape_incompatible_with_spurious=features.shape_tag not in SPURIOUS_SHAPES,
        beam_correlated=bool(schedule.is_on(features.trigger_time_s)) if schedule is not None else False,
    )


def separate_radiation(features: EventFeatures, cfg: Optional[ClassifierConfig] = None) -> Verdict:
    cfg = cfg or ClassifierConfig()
    if features.dirty_baseline:
        return Verdict.UNKNOWN

    scores = criteria_scores(features, cfg)
    if not scores.both_channels and not scores.shape_incompatible_with_spurious and not scores.amplitude_margin:
        return Verdict.SPURIOUS
    if scores.both_channels and scores.amplitude_margin:
        return Verdict.RADIATION
    return Verdict.UNKNOWN


def classify_fault(features: EventFeatures, cfg: Optional[ClassifierConfig] = None) -> FaultKind:
    """Peak iff the duration is strictly below the boundary; ties and undetermined ends are bursts."""
    cfg = cfg or ClassifierConfig()
    if features.end_undetermined or features.duration_s >= cfg.duration_boundary_s:
        return FaultKind.BURST
    return FaultKind.PEAK


def classify_event(
    features: EventFeatures,
    cfg: Optional[ClassifierConfig] = None,
    schedule: Optional[BeamSchedule] = None,
) -> ClassifiedEvent:
    cfg = cfg or ClassifierConfig()
    verdict = separate_radiation(features, cfg)
    if verdict is Verdict.RADIATION:
        klass = EventClass.RADIATION_PEAK if classify_fault(features, cfg) is FaultKind.PEAK else EventClass.RADIATION_BURST
    elif verdict is Verdict.SPURIOUS:
        klass = SPURIOUS_SHAPES[features.shape_tag]
    else:
        klass = EventClass.UNKNOWN
    return ClassifiedEvent(features=features, klass=klass, criteria=criteria_scores(features, cfg, schedule))


def classify_events(
    features: Iterable[EventFeatures],
    cfg: Optional[ClassifierConfig] = None,
    schedule: Optional[BeamSchedule] = None,
) -> List[ClassifiedEvent]:
    events = [classify_event(feature, cfg, schedule) for feature in features]
    counts = pd.Series([event.klass.value for event in events], dtype=object).value_counts().to_dict()
    logging.info(f"Classified {len(events)} events: {counts}")
    return events


def fisher_discriminant_ratio(class_a_values: Sequence[float], class_b_values: Sequence[float]) -> float:
    """``(mu_a - mu_b)^2 / (var_a + var_b)`` with sample variances; infinite when only the means differ."""
    a = np.asarray(class_a_values, dtype=np.float64)
    b = np.asarray(class_b_values, dtype=np.float64)
    if len(a) < 2 or len(b) < 2:
        raise InvalidInputError("each class needs at least two samples")
    if not (np.all(np.isfinite(a)) and np.all(np.isfinite(b))):
        raise InvalidInputError("class samples must be finite")

    separation = (a.mean() - b.mean()) ** 2
    spread = a.var(ddof=1) + b.var(ddof=1)
    if spread == 0:
        return 0.0 if separation == 0 else math.inf
    return float(separation / spread)


def duration_fdr(events: Iterable[ClassifiedEvent]) -> Optional[float]:
    """FDR of log10 durations between bursts and peaks with determined ends."""
    durations: Dict[EventClass, List[float]] = {EventClass.RADIATION_BURST: [], EventClass.RADIATION_PEAK: []}
    for event in events:
        if event.klass in durations and not event.features.end_undetermined and event.features.duration_s > 0:
            durations[event.klass].append(math.log10(event.features.duration_s))

    if any(len(values) < 2 for values in durations.values()):
        return None
    return fisher_discriminant_ratio(durations[EventClass.RADIATION_BURST], durations[EventClass.RADIATION_PEAK])


@dataclass(frozen=True)
class ClassRates:
    count_on: int
    count_off: int
    rate_on: float
    rate_off: Optional[float]
    # infinite when events occur only during beam ON; None without OFF time or without events
    ratio: Optional[float]
    ratio_undefined: bool
    # rate_on over the upper end of the 95% interval on rate_off
    ratio_lower_bound: Optional[float] = None

    @property
    def ratio_infinite(self) -> bool:
        return self.ratio is not None and math.isinf(self.ratio)

    def as_dict(self) -> Dict[str, Any]:
        return {
            "count_on": self.count_on,
            "count_off": self.count_off,
            "rate_on_per_h": self.rate_on * 3600.0,
            "rate_off_per_h": None if self.rate_off is None else self.rate_off * 3600.0,
            "ratio": None if self.ratio_infinite else self.ratio,
            "ratio_infinite": self.ratio_infinite,
            "ratio_lower_bound": self.ratio_lower_bound,
            "ratio_undefined": self.ratio_undefined,
        }


@dataclass(frozen=True)
class BeamCorrelation:
    on_time_s: float
    off_time_s: float
    classes: Dict[EventClass, ClassRates]
    timeline: List[Tuple[float, EventClass]]

    def as_dict(self) -> Dict[str, Any]:
        return {
            "on_time_s": self.on_time_s,
            "off_time_s": self.off_time_s,
            "classes": {klass.value: rates.as_dict() for klass, rates in self.classes.items()},
        }


def beam_correlation(events: Iterable[ClassifiedEvent], schedule: BeamSchedule) -> BeamCorrelation:
    events = list(events)
    span = schedule.span_s
    for event in events:
        if not 0 <= event.features.trigger_time_s <= span:
            raise InvalidInputError(f"event at {event.features.trigger_time_s} s lies outside the schedule span")

    on_time = schedule.on_time()
    off_time = schedule.off_time()
    classes: Dict[EventClass, ClassRates] = {}
    for klass in EventClass:
        times = np.array([event.features.trigger_time_s for event in events if event.klass is klass])
        on = schedule.is_on(times) if len(times) else np.zeros(0, dtype=bool)
        count_on = int(np.count_nonzero(on))
        count_off = len(times) - count_on

        rate_on = count_on / on_time if on_time > 0 else 0.0
        ratio: Optional[float] = None
        lower_bound: Optional[float] = None
        if off_time == 0:
            logging.warning(f"No beam-OFF time in {schedule.name}; ON/OFF ratio of {klass.value} is undefined")
            rate_off = None
        else:
            rate_off = count_off / off_time
            if count_off > 0:
                ratio = rate_on / rate_off
            elif count_on > 0:
                ratio = math.inf
            lower_bound = rate_on / (poisson_ci(count_off)[1] / off_time)
        classes[klass] = ClassRates(
            count_on=count_on,
            count_off=count_off,
            rate_on=rate_on,
            rate_off=rate_off,
            ratio=ratio,
            ratio_undefined=off_time == 0,
            ratio_lower_bound=lower_bound,
        )

    timeline = sorted((event.features.trigger_time_s, event.klass) for event in events)
    return BeamCorrelation(on_time_s=on_time, off_time_s=off_time, classes=classes, timeline=timeline)


@dataclass(frozen=True)
class MixRatio:
    peak_count: int
    burst_count: int

    @property
    def peak_pct(self) -> float:
        return 100.0 * self.peak_count / (self.peak_count + self.burst_count)

    @property
    def burst_pct(self) -> float:
        return 100.0 * self.burst_count / (self.peak_count + self.burst_count)

    def as_dict(self) -> Dict[str, Any]:
        return {
            "peak_count": self.peak_count,
            "burst_count": self.burst_count,
            "peak_pct": self.peak_pct,
            "burst_pct": self.burst_pct,
        }


def mix_ratio(classified_events: Iterable[ClassifiedEvent]) -> MixRatio:
    klasses = [event.klass for event in classified_events]
    peaks = klasses.count(EventClass.RADIATION_PEAK)
    bursts = klasses.count(EventClass.RADIATION_BURST)
    if peaks + bursts == 0:
        raise InvalidInputError("mix ratio needs at least one radiation event")
    return MixRatio(peak_count=peaks, burst_count=bursts)


def confusion_matrix(pairs: Iterable[Tuple[str, str]]) -> Dict[str, Dict[str, int]]:
    """Counts of (injected label, assigned class); captures without an injected event use the ``none`` label."""
    truth_labels = [klass.value for klass in EventClass if klass is not EventClass.UNKNOWN] + [NO_TRUTH]
    assigned_labels = [klass.value for klass in EventClass]
    matrix = {truth: {assigned: 0 for assigned in assigned_labels} for truth in truth_labels}
    for truth, assigned in pairs:
        matrix[truth][assigned] += 1
    return matrix


def off_diagonal_fraction(matrix: Dict[str, Dict[str, int]]) -> Optional[float]:
    total = sum(sum(row.values()) for row in matrix.values())
    if total == 0:
        return None
    diagonal = sum(row.get(truth, 0) for truth, row in matrix.items())
    return (total - diagonal) / total


def classified_frame(events: Iterable[ClassifiedEvent]) -> pd.DataFrame:
    return pd.DataFrame([event.to_row() for event in events], columns=FEATURE_COLUMNS + ["class"] + CRITERIA_COLUMNS)


def write_classified(path: Union[str, Path], events: Iterable[ClassifiedEvent]) -> None:
    classified_frame(events).to_csv(path, index=False, float_format="%.12g")


def read_classified(path: Union[str, Path]) -> List[ClassifiedEvent]:
    frame = pd.read_csv(path)
    return [ClassifiedEvent.from_row(row) for row in frame.to_dict(orient="records")]
