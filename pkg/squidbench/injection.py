from dataclasses import (
    dataclass,
    field,
)
from enum import Enum
from functools import cached_property
import logging
import math
from pathlib import Path
from typing import (
    Callable,
    Dict,
    Iterable,
    List,
    Mapping,
    Optional,
    Sequence,
    Tuple,
    Union,
)

import numpy as np
import pandas as pd

from squidbench.device import (
    ChannelPair,
    SampleClock,
)
from squidbench.utils.errors import InvalidInputError
from squidbench.utils.settings import settings_section

SECONDS_PER_HOUR = 3600.0


class Species(Enum):
    NEUTRON_14MEV = "neutron_14MeV"
    NEUTRON_ATMOSPHERIC = "neutron_atmospheric"
    GAMMA_1_25MEV = "gamma_1.25MeV"

    @property
    def is_neutron(self) -> bool:
        return self is not Species.GAMMA_1_25MEV


class FaultKind(Enum):
    BURST = "burst"
    PEAK = "peak"
    SAWTOOTH = "sawtooth"
    OSCILLATING = "oscillating"

    @property
    def is_radiation(self) -> bool:
        return self in (FaultKind.BURST, FaultKind.PEAK)


class EventClass(Enum):
    RADIATION_BURST = "radiation_burst"
    RADIATION_PEAK = "radiation_peak"
    SPURIOUS_SAWTOOTH = "spurious_sawtooth"
    SPURIOUS_OSCILLATING = "spurious_oscillating"
    UNKNOWN = "unknown"

    @property
    def is_radiation(self) -> bool:
        return self in (EventClass.RADIATION_BURST, EventClass.RADIATION_PEAK)

    @property
    def is_spurious(self) -> bool:
        return self in (EventClass.SPURIOUS_SAWTOOTH, EventClass.SPURIOUS_OSCILLATING)


LABELS: Dict[FaultKind, EventClass] = {
    FaultKind.BURST: EventClass.RADIATION_BURST,
    FaultKind.PEAK: EventClass.RADIATION_PEAK,
    FaultKind.SAWTOOTH: EventClass.SPURIOUS_SAWTOOTH,
    FaultKind.OSCILLATING: EventClass.SPURIOUS_OSCILLATING,
}


@settings_section
@dataclass(frozen=True)
class BeamInterval:
    start_s: float
    end_s: float
    species: Species
    flux: float
    # all-energy flux over the flux quoted by the facility convention (>10 MeV for atmospheric beams)
    low_energy_factor: float = 1.0

    def __post_init__(self) -> None:
        if not self.end_s > self.start_s:
            raise InvalidInputError(f"beam interval must end after it starts: [{self.start_s}, {self.end_s}]")
        if self.flux < 0 or self.low_energy_factor < 1.0:
            raise InvalidInputError("flux must be non-negative and low_energy_factor at least 1")

    @property
    def duration_s(self) -> float:
        return self.end_s - self.start_s


@settings_section
@dataclass(frozen=True)
class BeamPattern:

    species: Species
    flux: float
    on_s: float
    off_s: float
    cycles: int
    start_s: float = 0.0
    low_energy_factor: float = 1.0

    def expand(self) -> List[BeamInterval]:
        period = self.on_s + self.off_s
        return [
            BeamInterval(
                start_s=self.start_s + k * period,
                end_s=self.start_s + k * period + self.on_s,
                species=self.species,
                flux=self.flux,
                low_energy_factor=self.low_energy_factor,
            )
            for k in range(self.cycles)
        ]

    @property
    def end_s(self) -> float:
        return self.start_s + self.cycles * (self.on_s + self.off_s)


@settings_section
@dataclass(frozen=True)
class DoseRun:
    dose_rate_gy_h: float
    minutes: float
    total_gy: float


@settings_section
@dataclass(frozen=True)
class BeamSchedule:
    name: str = "campaign"
    duration_s: float = 0.0
    intervals: Tuple[BeamInterval, ...] = ()
    patterns: Tuple[BeamPattern, ...] = ()
    dose_runs: Tuple[DoseRun, ...] = ()

    def __post_init__(self) -> None:
        by_species: Dict[Species, List[BeamInterval]] = {}
        for interval in self.beam_intervals:
            by_species.setdefault(interval.species, []).append(interval)

        for species, intervals in by_species.items():
            for previous, current in zip(intervals, intervals[1:]):
                if current.start_s < previous.end_s:
                    raise InvalidInputError(f"overlapping {species.value} intervals at t = {current.start_s} s")

        if self.duration_s < 0:
            raise InvalidInputError(f"campaign duration must be non-negative, got {self.duration_s}")

    @cached_property
    def beam_intervals(self) -> Tuple[BeamInterval, ...]:
        expanded = list(self.intervals)
        for pattern in self.patterns:
            expanded.extend(pattern.expand())
        return tuple(sorted(expanded, key=lambda interval: (interval.start_s, interval.species.value)))

    @property
    def span_s(self) -> float:
        ends = [interval.end_s for interval in self.beam_intervals] + [pattern.end_s for pattern in self.patterns]
        return max([self.duration_s] + ends)

    @cached_property
    def on_periods(self) -> Tuple[Tuple[float, float], ...]:
        merged: List[List[float]] = []
        for interval in sorted(self.beam_intervals, key=lambda interval: interval.start_s):
            if interval.flux <= 0:
                continue
            if merged and interval.start_s <= merged[-1][1]:
                merged[-1][1] = max(merged[-1][1], interval.end_s)
            else:
                merged.append([interval.start_s, interval.end_s])
        return tuple((start, end) for start, end in merged)

    def is_on(self, t: Union[float, np.ndarray]) -> Union[bool, np.ndarray]:
        times = np.asarray(t, dtype=np.float64)
        on = np.zeros(times.shape, dtype=bool)
        for start, end in self.on_periods:
            on |= (times >= start) & (times < end)
        if np.ndim(t) == 0:
            return bool(on)
        return on

    def on_time(self) -> float:
        return math.fsum(end - start for start, end in self.on_periods)

    def off_time(self) -> float:
        return self.span_s - self.on_time()

    def species_present(self) -> List[Species]:
        return sorted({interval.species for interval in self.beam_intervals}, key=lambda species: species.value)


@settings_section
@dataclass(frozen=True)
class FaultTemplate:
    kind: FaultKind
    duration_median_s: float
    duration_sigma: float
    amplitude_low_mv: float
    amplitude_high_mv: float
    outlier_fraction: float = 0.0
    outlier_low_mv: float = 380.0
    outlier_high_mv: float = 420.0
    min_duration_s: float = 10e-9
    corruption_interval_low_s: float = 5e-9
    corruption_interval_high_s: float = 5e-6
    duty_cycle: float = 0.7
    level_floor: float = 0.5
    # share of a peak's duration spent rising to its maximum; the fall takes the rest
    peak_rise_fraction: float = 0.25
    current_coupling: float = 1e-3
    affects_both_channels: bool = True

    def __post_init__(self) -> None:
        if not self.kind.is_radiation:
            raise InvalidInputError(f"fault templates describe radiation kinds, got {self.kind.value}")
        positive = (
            self.duration_median_s,
            self.min_duration_s,
            self.corruption_interval_low_s,
            self.corruption_interval_high_s,
        )
        if any(not value > 0 for value in positive) or self.duration_sigma < 0:
            raise InvalidInputError(f"{self.kind.value} template time constants must be positive")
        if not 0 < self.amplitude_low_mv <= self.amplitude_high_mv:
            raise InvalidInputError(f"{self.kind.value} amplitude bounds are invalid")
        if not 0 < self.duty_cycle <= 1 or not 0 < self.level_floor <= 1:
            raise InvalidInputError("duty_cycle and level_floor must lie in (0, 1]")
        if self.corruption_interval_low_s > self.corruption_interval_high_s:
            raise InvalidInputError("corruption interval bounds are inverted")
        if not 0 <= self.outlier_fraction <= 1:
            raise InvalidInputError("outlier_fraction must lie in [0, 1]")
        if not 0 <= self.peak_rise_fraction < 1:
            raise InvalidInputError("peak_rise_fraction must lie in [0, 1)")

    def sample_duration(self, rng: np.random.Generator) -> float:
        return max(self.min_duration_s, float(rng.lognormal(math.log(self.duration_median_s), self.duration_sigma)))

    def sample_amplitude(self, rng: np.random.Generator) -> float:
        if self.outlier_fraction > 0 and rng.random() < self.outlier_fraction:
            return float(rng.uniform(self.outlier_low_mv, self.outlier_high_mv))
        return float(rng.uniform(self.amplitude_low_mv, self.amplitude_high_mv))


def default_burst_template() -> FaultTemplate:
    return FaultTemplate(
        kind=FaultKind.BURST,
        duration_median_s=100e-6,
        duration_sigma=0.5,
        amplitude_low_mv=50.0,
        amplitude_high_mv=250.0,
    )


def default_peak_template() -> FaultTemplate:
    return FaultTemplate(
        kind=FaultKind.PEAK,
        duration_median_s=200e-9,
        duration_sigma=0.6,
        amplitude_low_mv=50.0,
        amplitude_high_mv=200.0,
        outlier_fraction=0.02,
    )


@settings_section
@dataclass(frozen=True)
class SpuriousTemplate:
    kind: FaultKind
    rate_per_hour: float = 0.6
    amplitude_mv: float = 33.0
    duration_median_s: float = 20e-6
    duration_sigma: float = 0.3
    min_duration_s: float = 1e-6
    cycles: int = 5
    end_envelope: float = 0.1

    def __post_init__(self) -> None:
        if self.kind.is_radiation:
            raise InvalidInputError(f"spurious templates describe sawtooth or oscillating kinds, got {self.kind.value}")
        if self.rate_per_hour < 0 or not self.amplitude_mv > 0:
            raise InvalidInputError("spurious rate must be non-negative and amplitude positive")
        if not self.duration_median_s > 0 or self.cycles < 1 or not 0 < self.end_envelope <= 1:
            raise InvalidInputError("invalid spurious shape parameters")

    @classmethod
    def barely_above(cls, kind: FaultKind, trigger_mv: float, margin: float = 0.1, **kwargs) -> "SpuriousTemplate":
        return cls(kind=kind, amplitude_mv=trigger_mv * (1.0 + margin), **kwargs)

    def sample_duration(self, rng: np.random.Generator) -> float:
        return max(self.min_duration_s, float(rng.lognormal(math.log(self.duration_median_s), self.duration_sigma)))


@settings_section
@dataclass(frozen=True)
class FaultMix:
    burst: FaultTemplate = field(default_factory=default_burst_template)
    peak: FaultTemplate = field(default_factory=default_peak_template)
    peak_fraction: Dict[Species, float] = field(default_factory=dict)
    default_peak_fraction: float = 0.1

    def peak_fraction_for(self, species: Species) -> float:
        return self.peak_fraction.get(species, self.default_peak_fraction)


Template = Union[FaultTemplate, SpuriousTemplate]


@dataclass(frozen=True)
class PlanEntry:
    index: int
    time_s: float
    kind: FaultKind
    duration_s: float
    amplitude_mv: float
    label: EventClass
    polarity: int
    seed: int
    template: Template
    species: Optional[Species] = None


@dataclass(frozen=True)
class InjectionPlan:
    entries: Tuple[PlanEntry, ...] = ()
    span_s: float = 0.0

    def __len__(self) -> int:
        return len(self.entries)

    def radiation_entries(self) -> List[PlanEntry]:
        return [entry for entry in self.entries if entry.kind.is_radiation]

    def spurious_entries(self) -> List[PlanEntry]:
        return [entry for entry in self.entries if not entry.kind.is_radiation]

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(
            {
                "time_s": [entry.time_s for entry in self.entries],
                "kind": [entry.kind.value for entry in self.entries],
                "duration_s": [entry.duration_s for entry in self.entries],
                "amplitude_mV": [entry.amplitude_mv for entry in self.entries],
                "label": [entry.label.value for entry in self.entries],
            },
            columns=["time_s", "kind", "duration_s", "amplitude_mV", "label"],
        )

    def write_csv(self, path: Union[str, Path]) -> None:
        self.to_frame().to_csv(path, index=False, float_format="%.12g")


@dataclass
class _Draft:
    time_s: float
    kind: FaultKind
    duration_s: float
    amplitude_mv: float
    polarity: int
    seed: int
    template: Template
    species: Optional[Species]


def _draft(template: Template, time_s: float, rng: np.random.Generator, species: Optional[Species]) -> _Draft:
    duration = template.sample_duration(rng)
    if isinstance(template, FaultTemplate):
        amplitude = template.sample_amplitude(rng)
    else:
        amplitude = template.amplitude_mv
    return _Draft(
        time_s=float(time_s),
        kind=template.kind,
        duration_s=duration,
        amplitude_mv=amplitude,
        polarity=int(rng.choice((-1, 1))),
        seed=int(rng.integers(0, 2**63 - 1)),
        template=template,
        species=species,
    )


def _finalize(drafts: List[_Draft], span_s: float) -> InjectionPlan:
    drafts.sort(key=lambda draft: (draft.time_s, draft.kind.value))
    entries = tuple(
        PlanEntry(
            index=index,
            time_s=draft.time_s,
            kind=draft.kind,
            duration_s=draft.duration_s,
            amplitude_mv=draft.amplitude_mv,
            label=LABELS[draft.kind],
            polarity=draft.polarity,
            seed=draft.seed,
            template=draft.template,
            species=draft.species,
        )
        for index, draft in enumerate(drafts)
    )

    radiation = sum(1 for entry in entries if entry.kind.is_radiation)
    logging.info(f"Sampled {len(entries)} arrivals ({radiation} radiation, {len(entries) - radiation} spurious) over {span_s:.1f} s")
    return InjectionPlan(entries=entries, span_s=span_s)


def sample_arrivals(
    schedule: BeamSchedule,
    sigma: Union[float, Mapping[Species, float]],
    spurious: Sequence[SpuriousTemplate],
    rng_seed: int,
    faults: Optional[FaultMix] = None,
) -> InjectionPlan:
    """Radiation faults arrive at rate ``sigma * flux`` while the beam is on; spurious events arrive all the time."""
    faults = faults or FaultMix()
    rng = np.random.default_rng(rng_seed)
    span = schedule.span_s
    drafts: List[_Draft] = []

    for interval in schedule.beam_intervals:
        species_sigma = sigma.get(interval.species, 0.0) if isinstance(sigma, Mapping) else sigma
        if species_sigma < 0:
            raise InvalidInputError(f"cross section must be non-negative, got {species_sigma}")

        expected = species_sigma * interval.flux * interval.duration_s
        count = int(rng.poisson(expected)) if expected > 0 else 0
        for time_s in np.sort(rng.uniform(interval.start_s, interval.end_s, count)):
            is_peak = rng.random() < faults.peak_fraction_for(interval.species)
            drafts.append(_draft(faults.peak if is_peak else faults.burst, time_s, rng, interval.species))

    for template in spurious:
        expected = template.rate_per_hour / SECONDS_PER_HOUR * span
        count = int(rng.poisson(expected)) if expected > 0 else 0
        for time_s in np.sort(rng.uniform(0.0, span, count)):
            drafts.append(_draft(template, time_s, rng, None))

    return _finalize(drafts, span)


def fixed_plan(
    counts: Mapping[FaultKind, int],
    spacing_s: float,
    rng_seed: int,
    faults: Optional[FaultMix] = None,
    spurious: Sequence[SpuriousTemplate] = (),
) -> InjectionPlan:
    """Exactly ``counts`` events in shuffled order, one per ``spacing_s`` slot at the slot centers."""
    if not spacing_s > 0 or any(count < 0 for count in counts.values()):
        raise InvalidInputError("spacing must be positive and counts non-negative")

    faults = faults or FaultMix()
    templates: Dict[FaultKind, Template] = {FaultKind.BURST: faults.burst, FaultKind.PEAK: faults.peak}
    for template in spurious:
        templates.setdefault(template.kind, template)
    missing = [kind.value for kind, count in counts.items() if count and kind not in templates]
    if missing:
        raise InvalidInputError(f"no template for {missing}")

    rng = np.random.default_rng(rng_seed)
    kinds = [kind for kind in FaultKind for _ in range(counts.get(kind, 0))]
    order = rng.permutation(len(kinds))
    drafts = [
        _draft(templates[kinds[k]], (slot + 0.5) * spacing_s, rng, None)
        for slot, k in enumerate(order.tolist())
    ]
    return _finalize(drafts, len(kinds) * spacing_s)


@dataclass(frozen=True, eq=False)
class Perturbation:
    start_index: int
    current: np.ndarray
    voltage: np.ndarray

    @property
    def stop_index(self) -> int:
        return self.start_index + len(self.voltage)


def support_samples(duration_s: float, clock: SampleClock) -> int:
    if duration_s < clock.dt:
        raise InvalidInputError(f"perturbation of {duration_s:.3e} s is shorter than one sample ({clock.dt:.3e} s)")
    return int(math.ceil(duration_s / clock.dt - 1e-9))


def entry_support(entry: PlanEntry, clock: SampleClock) -> Tuple[int, int]:
    start = clock.index_of(entry.time_s)
    return start, start + support_samples(entry.duration_s, clock)


def _expect_kind(entry: PlanEntry, kind: FaultKind) -> None:
    if entry.kind is not kind:
        raise InvalidInputError(f"expected a {kind.value} entry, got {entry.kind.value}")


def telegraph_levels(template: FaultTemplate, samples: int, clock: SampleClock, rng: np.random.Generator) -> np.ndarray:
    """Per-sample corruption level of a burst: alternating on/off intervals, first interval fully on."""
    duration = samples * clock.dt
    if math.isinf(template.corruption_interval_high_s) or template.corruption_interval_low_s >= duration:
        return np.ones(samples)

    log_low = math.log(template.corruption_interval_low_s)
    log_high = math.log(template.corruption_interval_high_s)
    off_scale = (1.0 - template.duty_cycle) / template.duty_cycle

    lengths: List[np.ndarray] = []
    total = 0.0
    batch = max(16, int(2 * duration / template.corruption_interval_low_s ** 0.5 / template.corruption_interval_high_s ** 0.5))
    while total < duration:
        drawn = np.exp(rng.uniform(log_low, log_high, batch))
        drawn[1::2] *= off_scale
        if len(lengths) % 2 == 1 and batch % 2 == 1:
            drawn = drawn[:-1]
        lengths.append(drawn)
        total += float(drawn.sum())

    interval_lengths = np.concatenate(lengths)
    bounds = np.floor(np.concatenate(([0.0], np.cumsum(interval_lengths))) / clock.dt).astype(np.int64)
    bounds = np.clip(bounds, 0, samples)
    bounds[1] = max(bounds[1], 1)
    bounds = np.maximum.accumulate(bounds)

    on = np.arange(len(interval_lengths)) % 2 == 0
    levels = np.where(on, rng.uniform(template.level_floor, 1.0, len(interval_lengths)), 0.0)
    levels[0] = 1.0

    counts = np.diff(bounds)
    trace = np.repeat(levels, counts)
    if len(trace) < samples:
        trace = np.concatenate((trace, np.zeros(samples - len(trace))))
    return trace[:samples]


def render_burst(entry: PlanEntry, clock: SampleClock) -> Perturbation:
    _expect_kind(entry, FaultKind.BURST)
    template: FaultTemplate = entry.template
    samples = support_samples(entry.duration_s, clock)
    levels = telegraph_levels(template, samples, clock, np.random.default_rng(entry.seed))
    voltage = entry.polarity * entry.amplitude_mv * levels
    return Perturbation(
        start_index=clock.index_of(entry.time_s),
        current=voltage * template.current_coupling,
        voltage=voltage,
    )


def peak_shape(duration_s: float, rise_fraction: float, clock: SampleClock) -> np.ndarray:
    """Unit-height pulse whose support is exactly the span above 10% of its maximum."""
    samples = support_samples(duration_s, clock)
    t = np.arange(samples) * clock.dt
    t_peak = rise_fraction * duration_s
    tau_rise = rise_fraction * duration_s / math.log(10.0)
    tau_fall = (1.0 - rise_fraction) * duration_s / math.log(10.0)

    shape = np.exp(-(t - t_peak) / tau_fall)
    if tau_rise > 0:
        rising = t < t_peak
        shape[rising] = np.exp((t[rising] - t_peak) / tau_rise)
    return shape


def render_peak(entry: PlanEntry, clock: SampleClock) -> Perturbation:
    _expect_kind(entry, FaultKind.PEAK)
    template: FaultTemplate = entry.template
    voltage = entry.polarity * entry.amplitude_mv * peak_shape(entry.duration_s, template.peak_rise_fraction, clock)
    return Perturbation(
        start_index=clock.index_of(entry.time_s),
        current=voltage * template.current_coupling,
        voltage=voltage,
    )


def render_sawtooth(entry: PlanEntry, clock: SampleClock) -> Perturbation:
    _expect_kind(entry, FaultKind.SAWTOOTH)
    samples = support_samples(entry.duration_s, clock)
    voltage = entry.polarity * entry.amplitude_mv * np.arange(1, samples + 1) / samples
    return Perturbation(start_index=clock.index_of(entry.time_s), current=np.zeros(samples), voltage=voltage)


def render_oscillating(entry: PlanEntry, clock: SampleClock) -> Perturbation:
    _expect_kind(entry, FaultKind.OSCILLATING)
    template: SpuriousTemplate = entry.template
    samples = support_samples(entry.duration_s, clock)
    phase = np.arange(samples) / samples
    envelope = np.power(template.end_envelope, phase)
    wave = envelope * np.sin(2.0 * np.pi * template.cycles * phase)
    voltage = entry.polarity * entry.amplitude_mv * wave / np.max(np.abs(wave))
    return Perturbation(start_index=clock.index_of(entry.time_s), current=np.zeros(samples), voltage=voltage)


RENDERERS: Dict[FaultKind, Callable[[PlanEntry, SampleClock], Perturbation]] = {
    FaultKind.BURST: render_burst,
    FaultKind.PEAK: render_peak,
    FaultKind.SAWTOOTH: render_sawtooth,
    FaultKind.OSCILLATING: render_oscillating,
}


def render_entry(entry: PlanEntry, clock: SampleClock) -> Perturbation:
    return RENDERERS[entry.kind](entry, clock)


def add_perturbation(current: np.ndarray, voltage: np.ndarray, base_index: int, perturbation: Perturbation) -> bool:
    lo = max(base_index, perturbation.start_index)
    hi = min(base_index + len(voltage), perturbation.stop_index)
    if lo >= hi:
        return False

    current[lo - base_index:hi - base_index] += perturbation.current[lo - perturbation.start_index:hi - perturbation.start_index]
    voltage[lo - base_index:hi - base_index] += perturbation.voltage[lo - perturbation.start_index:hi - perturbation.start_index]
    return True


@dataclass(frozen=True)
class GroundTruthRow:
    entry_index: int
    time_s: float
    kind: FaultKind
    label: EventClass
    start_index: int
    stop_index: int


def ground_truth(plan: InjectionPlan, clock: SampleClock) -> List[GroundTruthRow]:
    rows = []
    for entry in plan.entries:
        start, stop = entry_support(entry, clock)
        rows.append(
            GroundTruthRow(
                entry_index=entry.index,
                time_s=entry.time_s,
                kind=entry.kind,
                label=entry.label,
                start_index=start,
                stop_index=stop,
            ),
        )
    return rows


def match_truth(rows: Iterable[GroundTruthRow], sample_index: int) -> Optional[GroundTruthRow]:
    for row in rows:
        if row.start_index <= sample_index < row.stop_index:
            return row
    return None


def apply_plan(channels: ChannelPair, plan: InjectionPlan) -> Tuple[ChannelPair, List[GroundTruthRow]]:
    clock = channels.clock
    base_index = int(round(clock.t0_s / clock.dt))
    end_s = clock.t0_s + len(channels) * clock.dt
    # perturbations live on the campaign grid, whose origin is t = 0
    campaign_clock = SampleClock(dt_ns=clock.dt_ns)

    current = np.array(channels.current_trace, dtype=np.float64, copy=True)
    voltage = np.array(channels.voltage_trace, dtype=np.float64, copy=True)

    for entry in plan.entries:
        if not clock.t0_s <= entry.time_s < end_s:
            raise InvalidInputError(f"plan entry {entry.index} at {entry.time_s} s lies outside the trace")
        add_perturbation(current, voltage, base_index, render_entry(entry, campaign_clock))

    return ChannelPair(clock=clock, current_trace=current, voltage_trace=voltage), ground_truth(plan, campaign_clock)
