"""Electrical model of the SQUID and synthesis of unperturbed oscilloscope traces.

Units follow the oscilloscope view: drive currents are in microamps before the
readout gain; the recorded current channel is ``gain * I[A]`` and the recorded
voltage channel is ``gain * V[V]`` expressed in millivolts.
"""
from dataclasses import dataclass
from enum import Enum
import math
from typing import (
    Optional,
    Tuple,
    Union,
)

import numpy as np

from squidbench.utils.errors import (
    InvalidInputError,
    TraceSizeError,
)
from squidbench.utils.settings import settings_section

MAX_TRACE_SAMPLES = 1 << 31
NOISE_BLOCK_SAMPLES = 1 << 16
MICRO = 1e-6


class VIModel(Enum):
    OHMIC = "ohmic"
    RSJ = "rsj"


class DriveShape(Enum):
    TRIANGLE = "triangle"


@settings_section
@dataclass(frozen=True)
class DeviceParams:
    critical_current: float = 54.3
    normal_resistance: float = 2.0
    readout_gain: float = 1e4
    noise_sigma_voltage: float = 1.0
    noise_sigma_current: float = 2e-3
    vi_model: VIModel = VIModel.OHMIC

    def __post_init__(self) -> None:
        if not self.critical_current > 0:
            raise InvalidInputError(f"critical_current must be positive, got {self.critical_current}")
        if not self.normal_resistance > 0:
            raise InvalidInputError(f"normal_resistance must be positive, got {self.normal_resistance}")
        if not self.readout_gain > 0:
            raise InvalidInputError(f"readout_gain must be positive, got {self.readout_gain}")
        if self.noise_sigma_voltage < 0 or self.noise_sigma_current < 0:
            raise InvalidInputError("noise sigmas must be non-negative")


@settings_section
@dataclass(frozen=True)
class DriveConfig:
    shape: DriveShape = DriveShape.TRIANGLE
    frequency_khz: float = 20.0
    amplitude_ua: float = 50.0

    def __post_init__(self) -> None:
        if not self.frequency_khz > 0:
            raise InvalidInputError(f"drive frequency must be positive, got {self.frequency_khz}")
        if self.amplitude_ua < 0:
            raise InvalidInputError(f"drive amplitude must be non-negative, got {self.amplitude_ua}")

    @property
    def period_s(self) -> float:
        return 1.0 / (self.frequency_khz * 1e3)


@settings_section
@dataclass(frozen=True)
class SampleClock:
    dt_ns: float = 4.0
    t0_s: float = 0.0

    def __post_init__(self) -> None:
        if not self.dt_ns > 0:
            raise InvalidInputError(f"dt must be positive, got {self.dt_ns} ns")

    @property
    def dt(self) -> float:
        return self.dt_ns * 1e-9

    def samples_in(self, duration_s: float) -> int:
        if not math.isfinite(duration_s) or duration_s < 0:
            raise TraceSizeError(f"Cannot size a trace for duration {duration_s} s")
        count = duration_s / self.dt
        if not math.isfinite(count) or count > MAX_TRACE_SAMPLES:
            raise TraceSizeError(f"{duration_s} s at {self.dt_ns} ns exceeds {MAX_TRACE_SAMPLES} samples")
        return int(math.floor(count + 1e-9))

    def index_of(self, time_s: float) -> int:
        return int(round((time_s - self.t0_s) / self.dt))

    def time_of(self, index: Union[int, np.ndarray]) -> Union[float, np.ndarray]:
        return self.t0_s + index * self.dt


@dataclass(frozen=True, eq=False)
class ChannelPair:
    clock: SampleClock
    current_trace: np.ndarray
    voltage_trace: np.ndarray

    def __post_init__(self) -> None:
        if self.current_trace.shape != self.voltage_trace.shape or self.current_trace.ndim != 1:
            raise InvalidInputError("current and voltage traces must be 1-D arrays of equal length")
        if not (np.all(np.isfinite(self.current_trace)) and np.all(np.isfinite(self.voltage_trace))):
            raise InvalidInputError("channel traces must be finite")

    def __len__(self) -> int:
        return len(self.voltage_trace)

    def times(self) -> np.ndarray:
        return self.clock.t0_s + np.arange(len(self)) * self.clock.dt

    def identical_to(self, other: "ChannelPair") -> bool:
        return (
            self.clock == other.clock
            and np.array_equal(self.current_trace, other.current_trace)
            and np.array_equal(self.voltage_trace, other.voltage_trace)
        )


def vi_characteristic(i: Union[float, np.ndarray], p: DeviceParams) -> Union[float, np.ndarray]:
    """Voltage in volts across the SQUID for a bias current ``i`` in microamps.

    Zero on the superconducting branch ``|i| <= I_c`` (boundary included),
    ohmic ``R * (|i| - I_c)`` above it, or ``R * sqrt(i^2 - I_c^2)`` for the RSJ option.
    """
    current = np.asarray(i, dtype=np.float64)
    if not np.all(np.isfinite(current)):
        raise InvalidInputError("vi_characteristic requires finite currents")

    magnitude = np.abs(current)
    excess = np.clip(magnitude - p.critical_current, 0.0, None)
    if p.vi_model is VIModel.RSJ:
        branch = np.sqrt(np.clip(magnitude**2 - p.critical_current**2, 0.0, None))
    else:
        branch = excess
    volts = np.sign(current) * p.normal_resistance * branch * MICRO
    volts = np.where(excess > 0, volts, 0.0)

    if np.ndim(i) == 0:
        return float(volts)
    return volts


def triangle_at(d: DriveConfig, clock: SampleClock, start_index: int, length: int) -> np.ndarray:
    indices = np.arange(start_index, start_index + length, dtype=np.float64)
    phase = np.mod(indices * (clock.dt * d.frequency_khz * 1e3), 1.0)
    amplitude = d.amplitude_ua
    return np.where(
        phase < 0.25,
        4.0 * amplitude * phase,
        np.where(phase < 0.75, 2.0 * amplitude - 4.0 * amplitude * phase, 4.0 * amplitude * phase - 4.0 * amplitude),
    )


def synthesize_drive(d: DriveConfig, clock: SampleClock, duration: float) -> np.ndarray:
    if not duration > 0:
        raise InvalidInputError(f"duration must be positive, got {duration}")
    if not math.isfinite(duration * d.frequency_khz):
        raise TraceSizeError("duration * frequency overflows")
    return triangle_at(d, clock, 0, clock.samples_in(duration))


def channel_noise(p: DeviceParams, rng_seed: int, start_index: int, length: int) -> Tuple[np.ndarray, np.ndarray]:
    """Gaussian (current, voltage) noise for absolute samples ``[start_index, start_index + length)``.

    Each block of ``NOISE_BLOCK_SAMPLES`` draws from its own stream seeded by
    ``(rng_seed, block)``, so any sample range reproduces the same values no
    matter how a longer trace is cut into pieces.
    """
    current = np.empty(length, dtype=np.float64)
    voltage = np.empty(length, dtype=np.float64)
    if length == 0:
        return current, voltage

    stop = start_index + length
    first_block = start_index // NOISE_BLOCK_SAMPLES
    last_block = (stop - 1) // NOISE_BLOCK_SAMPLES

    for block in range(first_block, last_block + 1):
        rng = np.random.default_rng([rng_seed, block])
        block_current = rng.standard_normal(NOISE_BLOCK_SAMPLES)
        block_voltage = rng.standard_normal(NOISE_BLOCK_SAMPLES)

        block_start = block * NOISE_BLOCK_SAMPLES
        lo = max(start_index, block_start)
        hi = min(stop, block_start + NOISE_BLOCK_SAMPLES)
        current[lo - start_index:hi - start_index] = block_current[lo - block_start:hi - block_start]
        voltage[lo - start_index:hi - start_index] = block_voltage[lo - block_start:hi - block_start]

    return current * p.noise_sigma_current, voltage * p.noise_sigma_voltage


def render_channels(
    drive_trace: np.ndarray,
    p: DeviceParams,
    rng_seed: int,
    clock: Optional[SampleClock] = None,
    start_index: int = 0,
    voltage_noise_clip: Optional[float] = None,
) -> ChannelPair:
    drive = np.asarray(drive_trace, dtype=np.float64)
    if drive.size and np.max(np.abs(drive)) > p.critical_current:
        raise InvalidInputError(
            f"drive peak {np.max(np.abs(drive)):.3f} uA exceeds the critical current {p.critical_current} uA",
        )

    noise_current, noise_voltage = channel_noise(p, rng_seed, start_index, len(drive))
    if voltage_noise_clip is not None:
        np.clip(noise_voltage, -voltage_noise_clip, voltage_noise_clip, out=noise_voltage)

    current = p.readout_gain * drive * MICRO + noise_current
    voltage = p.readout_gain * vi_characteristic(drive, p) * 1e3 + noise_voltage

    if clock is None:
        clock = SampleClock()
    return ChannelPair(clock=clock, current_trace=current, voltage_trace=voltage)
