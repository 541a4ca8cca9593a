"""Oscilloscope emulation: threshold trigger, 2 ms capture windows and campaign-scale synthesis.

Long campaigns are never materialized. ``CampaignSynthesizer.span`` renders any
absolute sample range on demand; dense acquisition walks the whole campaign in
segments while sparse acquisition only visits the samples where a perturbation
or a noise-tail excursion can cross the trigger. Both produce identical captures.
"""
from dataclasses import (
    dataclass,
    field,
    replace,
)
from enum import Enum
import logging
import math
from pathlib import Path
from typing import (
    Any,
    Callable,
    Dict,
    Iterator,
    List,
    Optional,
    Tuple,
    Union,
)

import numpy as np
from scipy.stats import (
    norm,
    truncnorm,
)

from squidbench.device import (
    MICRO,
    ChannelPair,
    DeviceParams,
    DriveConfig,
    SampleClock,
    channel_noise,
    triangle_at,
    vi_characteristic,
)
from squidbench.injection import (
    BeamSchedule,
    InjectionPlan,
    Perturbation,
    add_perturbation,
    entry_support,
    render_entry,
)
from squidbench.utils.errors import (
    InvalidInputError,
    TraceFormatError,
)
from squidbench.utils.settings import settings_section
from squidbench.utils.file import (
    read_json,
    write_json,
)
from squidbench.utils.trace_file import (
    read_trace,
    write_trace,
)

# second seed word of the noise-tail stream; block indices never reach it
TAIL_STREAM = (1 << 32) - 1


class TriggerPolarity(Enum):
    ABSOLUTE = "absolute"
    POSITIVE = "positive"


class AcquisitionMode(Enum):
    SPARSE = "sparse"
    DENSE = "dense"


@settings_section
@dataclass(frozen=True)
class TriggerConfig:
    threshold_mv: float = 30.0
    polarity: TriggerPolarity = TriggerPolarity.ABSOLUTE
    dead_time_s: float = 1e-3

    def __post_init__(self) -> None:
        if not self.threshold_mv > 0:
            raise InvalidInputError(f"trigger threshold must be positive, got {self.threshold_mv}")
        if self.dead_time_s < 0:
            raise InvalidInputError(f"dead time must be non-negative, got {self.dead_time_s}")

    def exceeds(self, voltage: np.ndarray) -> np.ndarray:
        if self.polarity is TriggerPolarity.ABSOLUTE:
            return np.abs(voltage) >= self.threshold_mv
        return voltage >= self.threshold_mv


@settings_section
@dataclass(frozen=True)
class CaptureWindow:
    pre_s: float = 1e-3
    post_s: float = 1e-3

    def __post_init__(self) -> None:
        if not (self.pre_s > 0 and self.post_s > 0):
            raise InvalidInputError("capture window pre and post must be positive")

    def samples(self, clock: SampleClock) -> Tuple[int, int]:
        return clock.samples_in(self.pre_s), clock.samples_in(self.post_s)


@settings_section
@dataclass(frozen=True)
class AcquisitionConfig:
    mode: AcquisitionMode = AcquisitionMode.SPARSE
    quantize_bits: Optional[int] = None
    voltage_full_scale_mv: float = 500.0
    current_full_scale: float = 1.0
    segment_samples: int = 1 << 20

    def __post_init__(self) -> None:
        if self.quantize_bits is not None and not 1 <= self.quantize_bits <= 24:
            raise InvalidInputError(f"quantize_bits must lie in [1, 24], got {self.quantize_bits}")
        if self.segment_samples < 1:
            raise InvalidInputError("segment_samples must be positive")


def quantize(samples: np.ndarray, bits: int, full_scale: float) -> np.ndarray:
    step = 2.0 * full_scale / (1 << bits)
    return np.round(np.clip(samples, -full_scale, full_scale - step) / step) * step


@dataclass
class TriggerState:

    previous_exceeded: bool = False
    last_index: Optional[int] = None
    next_scan_index: Optional[int] = None


def scan_segment(
    voltage: np.ndarray,
    base_index: int,
    cfg: TriggerConfig,
    clock: SampleClock,
    state: TriggerState,
) -> List[int]:
    if state.next_scan_index != base_index:
        # samples skipped since the last scanned range stayed below threshold
        state.previous_exceeded = False

    exceeded = cfg.exceeds(voltage)
    if len(exceeded) == 0:
        return []

    previous = np.concatenate(([state.previous_exceeded], exceeded[:-1]))
    rising = np.flatnonzero(exceeded & ~previous) + base_index

    dead_samples = int(round(cfg.dead_time_s / clock.dt))
    accepted = []
    for index in rising.tolist():
        if state.last_index is not None and index - state.last_index < dead_samples:
            continue
        accepted.append(index)
        state.last_index = index
        logging.debug(f"Trigger at sample {index}")

    state.previous_exceeded = bool(exceeded[-1])
    state.next_scan_index = base_index + len(voltage)
    return accepted


def scan_trigger(channels: ChannelPair, cfg: TriggerConfig) -> List[float]:
    clock = channels.clock
    base_index = int(round(clock.t0_s / clock.dt))
    indices = scan_segment(np.asarray(channels.voltage_trace, dtype=np.float64), base_index, cfg, clock, TriggerState())
    return [float(clock.dt * index) for index in indices]


@dataclass(frozen=True, eq=False)
class EventCapture:
    capture_id: int
    trigger_time_s: float
    clock: SampleClock
    current_samples: np.ndarray
    voltage_samples: np.ndarray
    trigger: TriggerConfig = field(default_factory=TriggerConfig)
    pre_samples: int = 0
    readout_gain: float = 1e4
    drive_frequency_khz: float = 20.0
    facility: str = ""
    schedule_id: str = ""
    truncated: bool = False

    def __post_init__(self) -> None:
        if self.current_samples.shape != self.voltage_samples.shape:
            raise InvalidInputError("capture channels must have equal length")

    def __len__(self) -> int:
        return len(self.voltage_samples)

    @property
    def trigger_index(self) -> int:
        return self.pre_samples

    def local_times(self) -> np.ndarray:
        return (np.arange(len(self)) - self.pre_samples) * self.clock.dt

    def channels(self) -> ChannelPair:
        return ChannelPair(clock=self.clock, current_trace=self.current_samples, voltage_trace=self.voltage_samples)

    def identical_to(self, other: "EventCapture") -> bool:
        return self.metadata() == other.metadata() and self.channels().identical_to(other.channels())

    def metadata(self) -> Dict[str, Any]:
        return {
            "capture_id": self.capture_id,
            "trigger_time_s": self.trigger_time_s,
            "threshold_mv": self.trigger.threshold_mv,
            "polarity": self.trigger.polarity.value,
            "dead_time_s": self.trigger.dead_time_s,
            "pre_samples": self.pre_samples,
            "drive_frequency_khz": self.drive_frequency_khz,
            "facility": self.facility,
            "schedule_id": self.schedule_id,
            "truncated": self.truncated,
        }

    def file_stem(self) -> str:
        return f"capture_{self.capture_id:06d}"

    def save(self, directory: Union[str, Path]) -> Path:
        root = Path(directory)
        root.mkdir(parents=True, exist_ok=True)
        trace_path = root / f"{self.file_stem()}.bin"
        write_trace(trace_path, self.channels(), self.readout_gain)
        write_json(root / f"{self.file_stem()}.json", self.metadata())
        return trace_path

    @classmethod
    def load(cls, trace_path: Union[str, Path]) -> "EventCapture":
        trace_path = Path(trace_path)
        sidecar = trace_path.with_suffix(".json")
        if not sidecar.exists():
            raise TraceFormatError(f"{trace_path}: missing metadata sidecar {sidecar.name}")

        channels, gain = read_trace(trace_path)
        meta = read_json(sidecar)
        try:
            return cls(
                capture_id=int(meta["capture_id"]),
                trigger_time_s=float(meta["trigger_time_s"]),
                clock=channels.clock,
                current_samples=channels.current_trace,
                voltage_samples=channels.voltage_trace,
                trigger=TriggerConfig(
                    threshold_mv=float(meta["threshold_mv"]),
                    polarity=TriggerPolarity(meta["polarity"]),
                    dead_time_s=float(meta["dead_time_s"]),
                ),
                pre_samples=int(meta["pre_samples"]),
                readout_gain=gain,
                drive_frequency_khz=float(meta["drive_frequency_khz"]),
                facility=str(meta["facility"]),
                schedule_id=str(meta["schedule_id"]),
                truncated=bool(meta["truncated"]),
            )
        except (KeyError, ValueError) as error:
            raise TraceFormatError(f"{sidecar}: invalid capture metadata ({error})") from error


def load_captures(directory: Union[str, Path]) -> List[EventCapture]:
    root = Path(directory)
    if not root.is_dir():
        raise InvalidInputError(f"{root} is not a directory")
    return [EventCapture.load(path) for path in sorted(root.glob("capture_*.bin"))]


Baseline = Callable[[int, int], Tuple[np.ndarray, np.ndarray]]


def capture(
    channels: ChannelPair,
    t_trigger: float,
    window: CaptureWindow,
    cfg: TriggerConfig,
    capture_id: int = 0,
    baseline: Optional[Baseline] = None,
    **metadata: Any,
) -> EventCapture:
    """Copy ``[t - pre, t + post)`` of ``channels``; samples outside the trace come from ``baseline``."""
    clock = channels.clock
    pre, post = window.samples(clock)
    trigger_index = clock.index_of(t_trigger)
    lo = trigger_index - pre
    hi = trigger_index + post

    if baseline is None:
        current = np.zeros(pre + post)
        voltage = np.zeros(pre + post)
    else:
        current, voltage = baseline(lo, pre + post)

    src_lo = max(lo, 0)
    src_hi = min(hi, len(channels))
    if src_lo < src_hi:
        current[src_lo - lo:src_hi - lo] = channels.current_trace[src_lo:src_hi]
        voltage[src_lo - lo:src_hi - lo] = channels.voltage_trace[src_lo:src_hi]

    truncated = lo < 0 or hi > len(channels)
    if truncated:
        logging.warning(f"Capture {capture_id} at {t_trigger:.6f} s is truncated by the trace edge")

    return EventCapture(
        capture_id=capture_id,
        trigger_time_s=t_trigger,
        clock=SampleClock(dt_ns=clock.dt_ns, t0_s=-pre * clock.dt),
        current_samples=current.astype(np.float32),
        voltage_samples=voltage.astype(np.float32),
        trigger=cfg,
        pre_samples=pre,
        truncated=truncated,
        **metadata,
    )


class CampaignSynthesizer:

    def __init__(
        self,
        device: DeviceParams,
        drive: DriveConfig,
        clock: SampleClock,
        plan: InjectionPlan,
        span_s: float,
        seed: int,
        trigger: TriggerConfig,
    ) -> None:
        if drive.amplitude_ua > device.critical_current:
            raise InvalidInputError(
                f"drive amplitude {drive.amplitude_ua} uA exceeds the critical current {device.critical_current} uA",
            )

        self.device = device
        self.drive = drive
        self.clock = SampleClock(dt_ns=clock.dt_ns)
        self.plan = plan
        self.seed = seed
        self.trigger = trigger
        self.total_samples = int(math.floor(span_s / self.clock.dt + 1e-9))
        self._noise_clip = float(np.nextafter(trigger.threshold_mv, 0.0))
        self._renders: Dict[int, Perturbation] = {}

        supports = [entry_support(entry, self.clock) for entry in plan.entries]
        self._starts = np.array([start for start, _ in supports], dtype=np.int64)
        self._stops = np.array([stop for _, stop in supports], dtype=np.int64)
        self._tail_indices, self._tail_values = self._sample_noise_tails()

    def _sample_noise_tails(self) -> Tuple[np.ndarray, np.ndarray]:
        sigma = self.device.noise_sigma_voltage
        if sigma == 0 or self.total_samples == 0:
            return np.empty(0, dtype=np.int64), np.empty(0)

        z = self.trigger.threshold_mv / sigma
        two_sided = self.trigger.polarity is TriggerPolarity.ABSOLUTE
        probability = (2.0 if two_sided else 1.0) * norm.sf(z)
        rng = np.random.default_rng([self.seed, TAIL_STREAM])
        count = int(rng.poisson(self.total_samples * probability))
        if count == 0:
            return np.empty(0, dtype=np.int64), np.empty(0)

        indices = np.unique(rng.integers(0, self.total_samples, count))
        magnitudes = truncnorm.rvs(z, np.inf, scale=sigma, size=len(indices), random_state=rng)
        signs = rng.choice((-1.0, 1.0), size=len(indices)) if two_sided else np.ones(len(indices))
        logging.info(f"Sampled {len(indices)} noise-tail excursions above {self.trigger.threshold_mv} mV")
        return indices, magnitudes * signs

    def _render(self, position: int) -> Perturbation:
        if position not in self._renders:
            self._renders[position] = render_entry(self.plan.entries[position], self.clock)
        return self._renders[position]

    def baseline(self, start: int, length: int) -> Tuple[np.ndarray, np.ndarray]:
        drive = triangle_at(self.drive, self.clock, start, length)
        current = self.device.readout_gain * drive * MICRO
        voltage = self.device.readout_gain * vi_characteristic(drive, self.device) * 1e3
        return current, np.asarray(voltage, dtype=np.float64)

    def span(self, start: int, stop: int) -> Tuple[np.ndarray, np.ndarray]:
        """Both channels for absolute samples ``[start, stop)``; outside the campaign only the noiseless baseline."""
        current, voltage = self.baseline(start, stop - start)
        lo = max(start, 0)
        hi = min(stop, self.total_samples)
        if lo >= hi:
            return current, voltage

        noise_current, noise_voltage = channel_noise(self.device, self.seed, lo, hi - lo)
        np.clip(noise_voltage, -self._noise_clip, self._noise_clip, out=noise_voltage)
        tails = slice(*np.searchsorted(self._tail_indices, [lo, hi]))
        noise_voltage[self._tail_indices[tails] - lo] = self._tail_values[tails]

        current[lo - start:hi - start] += noise_current
        voltage[lo - start:hi - start] += noise_voltage

        for position in np.flatnonzero((self._starts < hi) & (self._stops > lo)).tolist():
            add_perturbation(current[lo - start:hi - start], voltage[lo - start:hi - start], lo, self._render(position))
        return current, voltage

    def candidate_regions(self) -> List[Tuple[int, int]]:
        """Merged sample ranges that can hold a trigger: perturbation supports and noise-tail samples."""
        starts = np.concatenate((self._starts, self._tail_indices))
        stops = np.concatenate((self._stops, self._tail_indices + 1))
        starts = np.clip(starts, 0, self.total_samples)
        stops = np.clip(stops, 0, self.total_samples)
        order = np.argsort(starts, kind="stable")

        regions: List[List[int]] = []
        for lo, hi in zip(starts[order].tolist(), stops[order].tolist()):
            if lo >= hi:
                continue
            if regions and lo <= regions[-1][1]:
                regions[-1][1] = max(regions[-1][1], hi)
            else:
                regions.append([lo, hi])
        return [(lo, hi) for lo, hi in regions]

    def trigger_indices(self, mode: AcquisitionMode, segment_samples: int = 1 << 20) -> List[int]:
        state = TriggerState()
        if mode is AcquisitionMode.DENSE:
            ranges = [(lo, min(lo + segment_samples, self.total_samples)) for lo in range(0, self.total_samples, segment_samples)]
        else:
            ranges = []
            for lo, hi in self.candidate_regions():
                ranges.extend((a, min(a + segment_samples, hi)) for a in range(lo, hi, segment_samples))

        triggers: List[int] = []
        for lo, hi in ranges:
            _, voltage = self.span(lo, hi)
            triggers.extend(scan_segment(voltage, lo, self.trigger, self.clock, state))

        logging.info(f"{mode.value} scan over {len(ranges)} ranges found {len(triggers)} triggers")
        return triggers


def acquire(
    synthesizer: CampaignSynthesizer,
    window: CaptureWindow,
    acquisition: AcquisitionConfig,
    facility: str = "",
    schedule_id: str = "",
) -> Iterator[EventCapture]:
    clock = synthesizer.clock
    pre, post = window.samples(clock)

    for capture_id, index in enumerate(synthesizer.trigger_indices(acquisition.mode, acquisition.segment_samples)):
        lo = index - pre
        hi = index + post
        current, voltage = synthesizer.span(lo, hi)
        if acquisition.quantize_bits is not None:
            current = quantize(current, acquisition.quantize_bits, acquisition.current_full_scale)
            voltage = quantize(voltage, acquisition.quantize_bits, acquisition.voltage_full_scale_mv)

        truncated = lo < 0 or hi > synthesizer.total_samples
        if truncated:
            logging.warning(f"Capture {capture_id} at sample {index} is truncated by the campaign edge")

        yield EventCapture(
            capture_id=capture_id,
            trigger_time_s=float(index * clock.dt),
            clock=SampleClock(dt_ns=clock.dt_ns, t0_s=-pre * clock.dt),
            current_samples=current.astype(np.float32),
            voltage_samples=voltage.astype(np.float32),
            trigger=synthesizer.trigger,
            pre_samples=pre,
            readout_gain=synthesizer.device.readout_gain,
            drive_frequency_khz=synthesizer.drive.frequency_khz,
            facility=facility,
            schedule_id=schedule_id,
            truncated=truncated,
        )


def _campaign(
    mode: AcquisitionMode,
    schedule: BeamSchedule,
    plan: InjectionPlan,
    device: DeviceParams,
    cfg: TriggerConfig,
    drive: Optional[DriveConfig],
    clock: Optional[SampleClock],
    window: Optional[CaptureWindow],
    seed: int,
    acquisition: Optional[AcquisitionConfig],
    facility: str,
) -> Iterator[EventCapture]:
    synthesizer = CampaignSynthesizer(
        device=device,
        drive=drive or DriveConfig(),
        clock=clock or SampleClock(),
        plan=plan,
        span_s=max(schedule.span_s, plan.span_s),
        seed=seed,
        trigger=cfg,
    )
    settings = replace(acquisition or AcquisitionConfig(), mode=mode)
    return acquire(synthesizer, window or CaptureWindow(), settings, facility=facility, schedule_id=schedule.name)


def sparse_campaign(
    schedule: BeamSchedule,
    plan: InjectionPlan,
    device: DeviceParams,
    cfg: TriggerConfig,
    drive: Optional[DriveConfig] = None,
    clock: Optional[SampleClock] = None,
    window: Optional[CaptureWindow] = None,
    seed: int = 0,
    acquisition: Optional[AcquisitionConfig] = None,
    facility: str = "",
) -> Iterator[EventCapture]:
    return _campaign(AcquisitionMode.SPARSE, schedule, plan, device, cfg, drive, clock, window, seed, acquisition, facility)


def dense_campaign(
    schedule: BeamSchedule,
    plan: InjectionPlan,
    device: DeviceParams,
    cfg: TriggerConfig,
    drive: Optional[DriveConfig] = None,
    clock: Optional[SampleClock] = None,
    window: Optional[CaptureWindow] = None,
    seed: int = 0,
    acquisition: Optional[AcquisitionConfig] = None,
    facility: str = "",
) -> Iterator[EventCapture]:
    return _campaign(AcquisitionMode.DENSE, schedule, plan, device, cfg, drive, clock, window, seed, acquisition, facility)
