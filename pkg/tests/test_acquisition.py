"""Tests for the trigger, capture windows and campaign-scale acquisition."""
import numpy as np
import pytest

from squidbench.acquisition import (
    AcquisitionConfig,
    AcquisitionMode,
    CampaignSynthesizer,
    CaptureWindow,
    EventCapture,
    TriggerConfig,
    TriggerPolarity,
    TriggerState,
    capture,
    dense_campaign,
    load_captures,
    quantize,
    scan_segment,
    scan_trigger,
    sparse_campaign,
)
from squidbench.config import default_spurious
from squidbench.device import (
    ChannelPair,
    DeviceParams,
    DriveConfig,
    SampleClock,
)
from squidbench.injection import (
    BeamSchedule,
    FaultKind,
    InjectionPlan,
    fixed_plan,
)
from squidbench.utils.errors import (
    InvalidInputError,
    TraceFormatError,
)


def spikes(length, positions):
    voltage = np.zeros(length)
    for index, value in positions.items():
        voltage[index] = value
    return ChannelPair(clock=SampleClock(), current_trace=np.zeros(length), voltage_trace=voltage)


def test_trigger_respects_dead_time():
    channels = spikes(10000, {100: 40.0, 101: 40.0, 5000: -40.0})

    assert scan_trigger(channels, TriggerConfig(dead_time_s=0.0)) == [pytest.approx(100 * 4e-9), pytest.approx(5000 * 4e-9)]
    assert scan_trigger(channels, TriggerConfig(dead_time_s=1e-3)) == [pytest.approx(100 * 4e-9)]


def test_positive_polarity_ignores_negative_crossings():
    channels = spikes(10000, {100: 40.0, 5000: -40.0})
    cfg = TriggerConfig(polarity=TriggerPolarity.POSITIVE, dead_time_s=0.0)
    assert scan_trigger(channels, cfg) == [pytest.approx(100 * 4e-9)]


def test_threshold_is_inclusive():
    channels = spikes(1000, {10: 30.0, 500: 29.999})
    assert len(scan_trigger(channels, TriggerConfig(dead_time_s=0.0))) == 1


def test_crossing_split_across_segments_triggers_once():
    clock = SampleClock()
    cfg = TriggerConfig(dead_time_s=0.0)
    state = TriggerState()
    voltage = np.zeros(200)
    voltage[90:110] = 50.0

    first = scan_segment(voltage[:100], 0, cfg, clock, state)
    second = scan_segment(voltage[100:], 100, cfg, clock, state)
    assert first == [90]
    assert second == []


def test_trigger_config_is_validated():
    with pytest.raises(InvalidInputError):
        TriggerConfig(threshold_mv=0.0)
    with pytest.raises(InvalidInputError):
        CaptureWindow(pre_s=0.0)


def test_capture_window_and_truncation():
    channels = spikes(1000000, {300000: 40.0})
    window = CaptureWindow()
    event = capture(channels, 300000 * 4e-9, window, TriggerConfig(), capture_id=4)

    assert len(event) == 500000
    assert event.trigger_index == 250000
    assert event.voltage_samples[event.trigger_index] == 40.0
    assert not event.truncated
    assert event.local_times()[event.trigger_index] == 0.0

    early = capture(channels, 1e-4, window, TriggerConfig())
    assert early.truncated
    assert len(early) == 500000


def test_quantize_snaps_to_the_grid():
    values = quantize(np.array([-1000.0, 0.1, 1.0, 1000.0]), 12, 500.0)
    step = 1000.0 / 4096
    np.testing.assert_allclose(values / step, np.round(values / step))
    assert values[0] == -500.0
    assert values[-1] < 500.0


def test_capture_files(tmp_path):
    channels = spikes(1000000, {300000: 40.0})
    event = capture(channels, 300000 * 4e-9, CaptureWindow(), TriggerConfig(), capture_id=12, facility="NILE")
    path = event.save(tmp_path)

    assert path.name == "capture_000012.bin"
    loaded = load_captures(tmp_path)
    assert len(loaded) == 1
    assert loaded[0].identical_to(event)


def test_capture_without_sidecar_is_rejected(tmp_path):
    channels = spikes(1000000, {300000: 40.0})
    path = capture(channels, 300000 * 4e-9, CaptureWindow(), TriggerConfig()).save(tmp_path)
    path.with_suffix(".json").unlink()
    with pytest.raises(TraceFormatError):
        EventCapture.load(path)


def test_load_captures_needs_a_directory(tmp_path):
    with pytest.raises(InvalidInputError):
        load_captures(tmp_path / "missing")


def test_drive_above_critical_current_is_rejected():
    with pytest.raises(InvalidInputError):
        CampaignSynthesizer(
            DeviceParams(),
            DriveConfig(amplitude_ua=60.0),
            SampleClock(),
            InjectionPlan(),
            1e-3,
            0,
            TriggerConfig(),
        )


def test_span_is_reproducible_in_pieces(device):
    plan = fixed_plan({FaultKind.BURST: 1}, 1e-3, rng_seed=2)
    synthesizer = CampaignSynthesizer(device, DriveConfig(), SampleClock(), plan, 1e-3, 9, TriggerConfig())

    current, voltage = synthesizer.span(0, 250000)
    head_current, head_voltage = synthesizer.span(0, 100003)
    tail_current, tail_voltage = synthesizer.span(100003, 250000)
    np.testing.assert_array_equal(current, np.concatenate((head_current, tail_current)))
    np.testing.assert_array_equal(voltage, np.concatenate((head_voltage, tail_voltage)))


def test_dense_and_sparse_acquisition_agree(device):
    plan = fixed_plan(
        {FaultKind.BURST: 2, FaultKind.PEAK: 2, FaultKind.SAWTOOTH: 1},
        4e-3,
        rng_seed=8,
        spurious=default_spurious(),
    )
    schedule = BeamSchedule(name="modes", duration_s=plan.span_s)

    sparse = list(sparse_campaign(schedule, plan, device, TriggerConfig(), seed=5))
    dense = list(dense_campaign(schedule, plan, device, TriggerConfig(), seed=5))

    assert len(sparse) == 5
    assert len(dense) == len(sparse)
    assert all(a.identical_to(b) for a, b in zip(sparse, dense))
    assert all(item.schedule_id == "modes" for item in sparse)


def test_noise_tails_trigger_identically_in_both_modes():
    device = DeviceParams(noise_sigma_voltage=1.0)
    trigger = TriggerConfig(threshold_mv=3.0, dead_time_s=0.0)
    synthesizer = CampaignSynthesizer(device, DriveConfig(), SampleClock(), InjectionPlan(), 4e-4, 1, trigger)

    sparse = synthesizer.trigger_indices(AcquisitionMode.SPARSE)
    dense = synthesizer.trigger_indices(AcquisitionMode.DENSE, segment_samples=4096)
    # about 270 excursions above 3 sigma in 10^5 samples
    assert 150 < len(sparse) < 400
    assert sparse == dense


def test_quantized_acquisition(device):
    plan = fixed_plan({FaultKind.BURST: 1}, 4e-3, rng_seed=1)
    schedule = BeamSchedule(name="q", duration_s=plan.span_s)
    acquisition = AcquisitionConfig(quantize_bits=12)
    (event,) = list(sparse_campaign(schedule, plan, device, TriggerConfig(), acquisition=acquisition))

    step = 1000.0 / 4096
    voltage = event.voltage_samples.astype(np.float64)
    np.testing.assert_allclose(voltage / step, np.round(voltage / step), atol=1e-3)
