"""Tests for baseline, onset, end and amplitude extraction."""
from dataclasses import replace

from hypothesis import (
    given,
    settings,
    strategies as st,
)
from hypothesis.extra.numpy import arrays
import numpy as np
import pytest

from squidbench.acquisition import (
    CaptureWindow,
    EventCapture,
    TriggerConfig,
)
from squidbench.analysis import (
    AnalysisConfig,
    ChannelsAffected,
    ShapeTag,
    analyze_captures,
    baseline,
    compatible_windows,
    extract_features,
    find_end,
    find_onset,
    read_features,
    rolling_amplitude,
    rolling_series,
    shape_tag,
    write_features,
)
from squidbench.device import SampleClock
from squidbench.injection import FaultKind
from squidbench.utils.errors import InvalidInputError

signals = arrays(
    np.float64,
    st.integers(min_value=1, max_value=200),
    elements=st.floats(min_value=-1e3, max_value=1e3, allow_nan=False),
)


def flat_capture(length=40000, pre=20000, sigma=1.0, seed=0):
    rng = np.random.default_rng(seed)
    return EventCapture(
        capture_id=1,
        trigger_time_s=1.0,
        clock=SampleClock(dt_ns=4.0, t0_s=-pre * 4e-9),
        current_samples=(rng.standard_normal(length) * 2e-3).astype(np.float32),
        voltage_samples=(rng.standard_normal(length) * sigma).astype(np.float32),
        pre_samples=pre,
        drive_frequency_khz=0.0,
    )


@given(values=signals, width=st.integers(min_value=1, max_value=20))
@settings(deadline=None, max_examples=200)
def test_rolling_series_matches_brute_force(values, width):
    series = rolling_series(values, width)
    expected = [np.ptp(values[k:k + width]) for k in range(len(values) - width + 1)]
    np.testing.assert_array_equal(series, np.array(expected, dtype=np.float64).reshape(-1))


@given(values=signals, width=st.integers(min_value=1, max_value=20))
@settings(deadline=None, max_examples=200)
def test_rolling_series_is_reversal_invariant(values, width):
    np.testing.assert_array_equal(rolling_series(values[::-1], width), rolling_series(values, width)[::-1])


@given(values=signals, width=st.integers(min_value=1, max_value=20), scale=st.floats(min_value=-100.0, max_value=100.0))
@settings(deadline=None, max_examples=200)
def test_rolling_series_scales_with_the_signal(values, width, scale):
    np.testing.assert_allclose(rolling_series(scale * values, width), abs(scale) * rolling_series(values, width), rtol=1e-9, atol=1e-9)


def test_rolling_width_below_one_sample_is_rejected():
    with pytest.raises(InvalidInputError):
        rolling_amplitude(flat_capture(), width=1e-9)
    with pytest.raises(InvalidInputError):
        rolling_series(np.zeros(4), 0)


def test_rolling_amplitude_of_a_step():
    event = flat_capture(sigma=0.0)
    voltage = event.voltage_samples.copy()
    voltage[30000:] = 10.0
    stepped = EventCapture(
        capture_id=1,
        trigger_time_s=1.0,
        clock=event.clock,
        current_samples=event.current_samples,
        voltage_samples=voltage,
        pre_samples=event.pre_samples,
    )
    assert rolling_amplitude(stepped, 100e-9).max_amplitude == pytest.approx(10.0)
    assert rolling_amplitude(stepped, 100e-9, span=(0, 20000)).max_amplitude == 0.0


def test_baseline_of_clean_reference():
    stats = baseline(flat_capture(sigma=1.0))
    assert stats.sigma_voltage == pytest.approx(1.0, rel=0.05)
    assert not stats.dirty


def test_dirty_reference_is_flagged():
    stats = baseline(flat_capture(sigma=20.0))
    assert stats.dirty


def test_baseline_needs_samples():
    with pytest.raises(InvalidInputError):
        baseline(flat_capture(length=4, pre=2))


def test_burst_exemplar_is_recovered(make_capture):
    event = make_capture(FaultKind.BURST, 900e-6, 90.0)
    features = extract_features(event)

    assert not features.end_undetermined
    assert features.duration_s == pytest.approx(900e-6, abs=80e-6)
    assert features.max_amplitude_mv == pytest.approx(90.0, rel=0.15)
    assert features.channels_affected is ChannelsAffected.BOTH
    assert not features.dirty_baseline
    assert not features.onset_flagged


def test_peak_exemplar_is_recovered(make_capture):
    event = make_capture(FaultKind.PEAK, 1.2e-6, 100.0)
    features = extract_features(event)

    assert not features.end_undetermined
    assert features.duration_s == pytest.approx(1.2e-6, rel=0.3)
    assert features.max_excursion_mv == pytest.approx(100.0, rel=0.15)
    # a 100 ns window only sees part of a rise this slow
    assert 45.0 < features.max_amplitude_mv < features.max_excursion_mv
    assert features.channels_affected is ChannelsAffected.BOTH
    assert features.onset_s <= 0.0


def test_negative_polarity_peak(make_capture):
    event = make_capture(FaultKind.PEAK, 1.2e-6, 100.0, polarity=-1)
    features = extract_features(event)
    assert features.max_excursion_mv == pytest.approx(100.0, rel=0.15)
    assert features.max_amplitude_mv > 45.0


def test_sawtooth_is_a_voltage_only_ramp(make_capture):
    features = extract_features(make_capture(FaultKind.SAWTOOTH, 20e-6, 33.0))
    assert features.channels_affected is ChannelsAffected.VOLTAGE_ONLY
    assert features.shape_tag is ShapeTag.RAMP
    assert features.max_amplitude_mv < 45.0


def test_oscillation_is_a_voltage_only_oscillation(make_capture):
    features = extract_features(make_capture(FaultKind.OSCILLATING, 20e-6, 33.0))
    assert features.channels_affected is ChannelsAffected.VOLTAGE_ONLY
    assert features.shape_tag is ShapeTag.OSCILLATION


def test_event_running_past_the_window_has_no_end(make_capture):
    # dead time longer than the burst so its later sub-pulses do not retrigger
    event = make_capture(FaultKind.BURST, 1.5e-3, 90.0, trigger=TriggerConfig(dead_time_s=2e-3))
    features = extract_features(event)
    assert features.end_undetermined
    assert features.duration_s == pytest.approx(1e-3, rel=0.01)


def test_shape_tags_of_simple_signals():
    ramp = np.concatenate((np.zeros(100), np.linspace(0.0, 10.0, 1000), np.zeros(100)))
    pulse = np.concatenate((np.zeros(100), np.exp(-np.abs(np.arange(-50, 51)) / 10.0) * 10.0, np.zeros(100)))
    cycles = np.sin(np.linspace(0.0, 6.0 * np.pi, 600)) * 10.0

    assert shape_tag(ramp, 5) is ShapeTag.RAMP
    assert shape_tag(pulse, 5) is ShapeTag.PULSE
    assert shape_tag(cycles, 5) is ShapeTag.OSCILLATION
    assert shape_tag(np.zeros(50), 5) is ShapeTag.OTHER


def test_analysis_is_parallel_safe(make_capture):
    captures = [make_capture(FaultKind.PEAK, 1e-6, 80.0, seed=seed) for seed in (1, 2)]
    sequential = analyze_captures(captures, AnalysisConfig())
    parallel = analyze_captures(captures, AnalysisConfig(n_jobs=2))
    assert sequential == parallel


def test_features_csv(tmp_path, make_capture):
    features = [extract_features(make_capture(FaultKind.BURST, 900e-6, 90.0))]
    path = tmp_path / "features.csv"
    write_features(path, features)
    assert read_features(path)[0].channels_affected is ChannelsAffected.BOTH


def test_conventions_are_recorded():
    conventions = AnalysisConfig().conventions()
    assert conventions["local_variation"] == "peak_to_peak"
    assert conventions["rolling_width_s"] == 100e-9
    assert "n_jobs" not in conventions


def test_trigger_threshold_is_carried(make_capture):
    event = make_capture(FaultKind.PEAK, 1e-6, 80.0, trigger=TriggerConfig(threshold_mv=20.0))
    assert extract_features(event).threshold_mv == 20.0


# single captures place their event here on the campaign clock
EVENT_TIME_S = 2e-3


@pytest.fixture(scope="module")
def injected_faults(make_capture):
    """Features of 60 bursts and 40 peaks with spread durations, amplitudes and polarities."""
    generator = np.random.default_rng(17)
    faults = []
    for seed in range(100):
        kind = FaultKind.BURST if seed < 60 else FaultKind.PEAK
        if kind is FaultKind.BURST:
            duration = float(np.exp(generator.uniform(np.log(50e-6), np.log(800e-6))))
        else:
            duration = float(np.exp(generator.uniform(np.log(100e-9), np.log(1e-6))))
        amplitude = float(generator.uniform(60.0, 200.0))
        polarity = 1 if seed % 2 else -1
        event = make_capture(kind, duration, amplitude, seed=seed, polarity=polarity)
        faults.append((kind, duration, extract_features(event)))
    return faults


def test_onsets_of_injected_faults(injected_faults):
    errors = [abs(features.trigger_time_s + features.onset_s - EVENT_TIME_S) for _, _, features in injected_faults]
    assert np.median(errors) <= 1e-6
    assert not any(features.onset_flagged for _, _, features in injected_faults)


def test_burst_durations_of_injected_faults(injected_faults):
    errors = [
        abs(features.duration_s - duration) / duration
        for kind, duration, features in injected_faults
        if kind is FaultKind.BURST
    ]
    assert len(errors) == 60
    assert np.median(errors) <= 0.1


def test_slow_pre_trigger_tail_moves_the_onset_early():
    tau = 10e-6
    event = flat_capture(length=60000, pre=40000)
    t = event.local_times()
    tail = np.where(t <= 0.0, 100.0 * np.exp(np.minimum(t, 0.0) / tau), 100.0 * np.exp(-np.maximum(t, 0.0) / tau))
    event = replace(event, voltage_samples=(event.voltage_samples + tail).astype(np.float32))

    onset = find_onset(event, baseline(event))
    assert not onset.flagged
    assert onset.time_s <= -2 * tau


def test_end_ignores_a_common_offset(make_capture):
    event = make_capture(FaultKind.BURST, 100e-6, 90.0)
    shifted = replace(
        event,
        current_samples=event.current_samples.astype(np.float64) + 0.5,
        voltage_samples=event.voltage_samples.astype(np.float64) + 7.0,
    )

    end = find_end(event, baseline(event))
    assert not end.undetermined
    assert find_end(shifted, baseline(shifted)) == end


def test_end_is_the_first_compatible_window():
    event = flat_capture(length=80000, pre=20000)
    voltage = event.voltage_samples.astype(np.float64)
    voltage[20000:22500] += 50.0
    # a second disturbance well after the first event has settled
    voltage[50000:52500] += 50.0
    event = replace(event, voltage_samples=voltage)

    stats = baseline(event)
    starts, compatible = compatible_windows(event, stats)
    end = find_end(event, stats)
    assert end.index == starts[np.flatnonzero(compatible)[0]]
    assert end.index == pytest.approx(22500, abs=50)


def test_reference_comes_from_the_pre_trigger_samples(make_capture):
    event = make_capture(FaultKind.BURST, 100e-6, 90.0, window=CaptureWindow(pre_s=0.2e-3, post_s=1.8e-3))
    features = extract_features(event)

    assert not features.dirty_baseline
    assert features.channels_affected is ChannelsAffected.BOTH
    assert features.duration_s == pytest.approx(100e-6, abs=10e-6)


def test_amplitude_is_the_rolling_maximum_over_the_event(make_capture):
    event = make_capture(FaultKind.BURST, 100e-6, 90.0)
    stats = baseline(event)
    onset = find_onset(event, stats)
    end = find_end(event, stats)

    features = extract_features(event)
    assert features.max_amplitude_mv == rolling_amplitude(event, 100e-9, span=(onset.index, end.index)).max_amplitude


def test_slow_oscillation_has_a_small_rolling_amplitude(make_capture):
    features = extract_features(make_capture(FaultKind.OSCILLATING, 20e-6, 33.0))
    assert features.max_excursion_mv == pytest.approx(33.0, rel=0.15)
    assert features.max_amplitude_mv < 0.5 * features.max_excursion_mv
