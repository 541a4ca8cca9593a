"""Tests for the radiation/spurious separation, the burst/peak split and their diagnostics."""
import math

from hypothesis import (
    HealthCheck,
    given,
    settings,
    strategies as st,
)
import pytest

from squidbench.acquisition import (
    TriggerConfig,
    sparse_campaign,
)
from squidbench.analysis import (
    ChannelsAffected,
    ShapeTag,
    analyze_captures,
)
from squidbench.campaign import truth_pairs
from squidbench.classification import (
    NO_TRUTH,
    ClassifiedEvent,
    ClassifierConfig,
    CriteriaScores,
    Verdict,
    beam_correlation,
    classify_event,
    classify_events,
    classify_fault,
    confusion_matrix,
    duration_fdr,
    fisher_discriminant_ratio,
    mix_ratio,
    off_diagonal_fraction,
    read_classified,
    separate_radiation,
    write_classified,
)
from squidbench.config import default_spurious
from squidbench.device import (
    DeviceParams,
    SampleClock,
)
from squidbench.injection import (
    BeamPattern,
    BeamSchedule,
    EventClass,
    FaultKind,
    Species,
    fixed_plan,
)
from squidbench.utils.errors import InvalidInputError

RADIATION = {EventClass.RADIATION_BURST.value, EventClass.RADIATION_PEAK.value}


@pytest.fixture
def half_on_schedule():
    return BeamSchedule(
        name="half",
        patterns=(BeamPattern(species=Species.NEUTRON_14MEV, flux=1e6, on_s=10.0, off_s=10.0, cycles=1),),
    )


def test_large_two_channel_event_is_radiation(features_factory):
    assert separate_radiation(features_factory()) is Verdict.RADIATION
    assert classify_event(features_factory()).klass is EventClass.RADIATION_BURST
    assert classify_event(features_factory(duration_s=1e-6, end_s=1e-6)).klass is EventClass.RADIATION_PEAK


@pytest.mark.parametrize(
    "tag, expected",
    [(ShapeTag.RAMP, EventClass.SPURIOUS_SAWTOOTH), (ShapeTag.OSCILLATION, EventClass.SPURIOUS_OSCILLATING)],
)
def test_small_voltage_only_event_is_spurious(features_factory, tag, expected):
    features = features_factory(channels_affected=ChannelsAffected.VOLTAGE_ONLY, shape_tag=tag, max_amplitude_mv=33.0)
    assert separate_radiation(features) is Verdict.SPURIOUS
    assert classify_event(features).klass is expected


@pytest.mark.parametrize(
    "overrides",
    [
        # both channels but close to the trigger level
        dict(max_amplitude_mv=33.0),
        # one channel but large
        dict(channels_affected=ChannelsAffected.VOLTAGE_ONLY, shape_tag=ShapeTag.RAMP),
        # one channel with a shape no spurious source makes
        dict(channels_affected=ChannelsAffected.VOLTAGE_ONLY, max_amplitude_mv=33.0),
        dict(dirty_baseline=True),
    ],
)
def test_ambiguous_events_are_unknown(features_factory, overrides):
    features = features_factory(**overrides)
    assert separate_radiation(features) is Verdict.UNKNOWN
    assert classify_event(features).klass is EventClass.UNKNOWN


def test_amplitude_margin_is_inclusive(features_factory):
    assert separate_radiation(features_factory(max_amplitude_mv=45.0)) is Verdict.RADIATION
    assert separate_radiation(features_factory(max_amplitude_mv=44.99)) is Verdict.UNKNOWN
    assert separate_radiation(features_factory(max_amplitude_mv=44.99), ClassifierConfig(amplitude_margin_factor=1.2)) is Verdict.RADIATION


def test_duration_boundary_tie_is_a_burst(features_factory):
    assert classify_fault(features_factory(duration_s=10e-6)) is FaultKind.BURST
    assert classify_fault(features_factory(duration_s=9.99e-6)) is FaultKind.PEAK
    assert classify_fault(features_factory(duration_s=5e-6), ClassifierConfig(duration_boundary_s=1e-6)) is FaultKind.BURST


def test_undetermined_end_is_a_burst(features_factory):
    assert classify_fault(features_factory(end_s=None, duration_s=1e-7)) is FaultKind.BURST


@given(
    low=st.floats(min_value=0.0, max_value=500.0),
    high=st.floats(min_value=0.0, max_value=500.0),
    channels=st.sampled_from(list(ChannelsAffected)),
    tag=st.sampled_from(list(ShapeTag)),
)
@settings(deadline=None, max_examples=200, suppress_health_check=[HealthCheck.function_scoped_fixture])
def test_growing_amplitude_never_revokes_radiation(features_factory, low, high, channels, tag):
    low, high = sorted((low, high))
    small = separate_radiation(features_factory(max_amplitude_mv=low, channels_affected=channels, shape_tag=tag))
    large = separate_radiation(features_factory(max_amplitude_mv=high, channels_affected=channels, shape_tag=tag))
    if small is Verdict.RADIATION:
        assert large is Verdict.RADIATION


def test_radiation_class_needs_both_channels(features_factory):
    criteria = CriteriaScores(amplitude_margin=True, both_channels=False, shape_incompatible_with_spurious=True, beam_correlated=True)
    with pytest.raises(InvalidInputError):
        ClassifiedEvent(features=features_factory(), klass=EventClass.RADIATION_PEAK, criteria=criteria)


def test_criteria_record_beam_correlation(features_factory, half_on_schedule):
    on = classify_event(features_factory(trigger_time_s=5.0), schedule=half_on_schedule)
    off = classify_event(features_factory(trigger_time_s=15.0), schedule=half_on_schedule)
    assert on.criteria.beam_correlated
    assert not off.criteria.beam_correlated
    # beam correlation is reported, never used to decide
    assert on.klass is off.klass


def test_fisher_discriminant_ratio_by_hand():
    assert fisher_discriminant_ratio([1.0, 2.0, 3.0], [11.0, 12.0, 13.0]) == pytest.approx(50.0)
    assert fisher_discriminant_ratio([2.0, 2.0], [2.0, 2.0]) == 0.0
    assert fisher_discriminant_ratio([1.0, 1.0], [2.0, 2.0]) == float("inf")


@given(
    a=st.lists(st.integers(min_value=-1000, max_value=1000), min_size=2, max_size=20),
    b=st.lists(st.integers(min_value=-1000, max_value=1000), min_size=2, max_size=20),
    scale=st.floats(min_value=0.1, max_value=10.0),
    sign=st.sampled_from((-1.0, 1.0)),
    shift=st.integers(min_value=-100, max_value=100),
)
@settings(deadline=None, max_examples=200)
def test_fisher_discriminant_ratio_is_affine_invariant(a, b, scale, sign, shift):
    original = fisher_discriminant_ratio(a, b)
    if original == float("inf"):
        return
    moved = fisher_discriminant_ratio([sign * scale * x + shift for x in a], [sign * scale * x + shift for x in b])
    assert moved == pytest.approx(original, rel=1e-6, abs=1e-9)
    assert fisher_discriminant_ratio(b, a) == pytest.approx(original, rel=1e-9, abs=1e-9)


def test_fisher_discriminant_ratio_rejects_bad_input():
    with pytest.raises(InvalidInputError):
        fisher_discriminant_ratio([1.0], [1.0, 2.0])
    with pytest.raises(InvalidInputError):
        fisher_discriminant_ratio([1.0, float("nan")], [1.0, 2.0])


def test_duration_fdr_needs_two_of_each(features_factory):
    bursts = [classify_event(features_factory(duration_s=d, end_s=d)) for d in (1e-4, 2e-4)]
    peaks = [classify_event(features_factory(duration_s=d, end_s=d)) for d in (1e-7, 3e-7)]
    assert duration_fdr(bursts) is None
    assert duration_fdr(bursts + peaks) > 10.0


def test_beam_correlation_rates(features_factory, half_on_schedule):
    events = classify_events(features_factory(trigger_time_s=t) for t in (1.0, 2.0, 15.0))
    correlation = beam_correlation(events, half_on_schedule)
    rates = correlation.classes[EventClass.RADIATION_BURST]

    assert (rates.count_on, rates.count_off) == (2, 1)
    assert rates.rate_on == pytest.approx(0.2)
    assert rates.ratio == pytest.approx(2.0)
    assert correlation.classes[EventClass.UNKNOWN].ratio is None
    assert not correlation.classes[EventClass.UNKNOWN].ratio_undefined
    assert [klass for _, klass in correlation.timeline] == [EventClass.RADIATION_BURST] * 3
    assert correlation.as_dict()["classes"]["radiation_burst"]["rate_on_per_h"] == pytest.approx(720.0)


def test_beam_correlation_with_no_off_beam_events(features_factory, half_on_schedule):
    events = classify_events(features_factory(trigger_time_s=t) for t in (1.0, 2.0, 3.0))
    rates = beam_correlation(events, half_on_schedule).classes[EventClass.RADIATION_BURST]

    assert (rates.count_on, rates.count_off) == (3, 0)
    assert rates.rate_off == 0.0
    assert not rates.ratio_undefined
    assert rates.ratio == math.inf
    # 3.6889 is the upper end of the 95% interval for zero counts
    assert rates.ratio_lower_bound == pytest.approx(0.3 / (3.6889 / 10.0), rel=1e-4)

    row = rates.as_dict()
    assert row["ratio"] is None
    assert row["ratio_infinite"]


def test_beam_correlation_without_off_time(features_factory):
    schedule = BeamSchedule(patterns=(BeamPattern(species=Species.NEUTRON_14MEV, flux=1e6, on_s=10.0, off_s=0.0, cycles=1),))
    rates = beam_correlation(classify_events([features_factory(trigger_time_s=1.0)]), schedule).classes[EventClass.RADIATION_BURST]
    assert rates.ratio_undefined
    assert rates.ratio is None
    assert rates.rate_off is None


def test_beam_correlation_rejects_events_outside_the_span(features_factory, half_on_schedule):
    with pytest.raises(InvalidInputError):
        beam_correlation(classify_events([features_factory(trigger_time_s=100.0)]), half_on_schedule)


def test_mix_ratio(features_factory):
    events = classify_events(
        [features_factory(duration_s=1e-6, end_s=1e-6)] * 3 + [features_factory()] + [features_factory(max_amplitude_mv=33.0)],
    )
    mix = mix_ratio(events)
    assert (mix.peak_count, mix.burst_count) == (3, 1)
    assert mix.peak_pct == pytest.approx(75.0)
    assert mix.peak_pct + mix.burst_pct == pytest.approx(100.0)

    with pytest.raises(InvalidInputError):
        mix_ratio(events[-1:])


def test_confusion_matrix_and_off_diagonal_fraction():
    pairs = [
        ("radiation_burst", "radiation_burst"),
        ("radiation_burst", "radiation_peak"),
        ("spurious_sawtooth", "spurious_sawtooth"),
        (NO_TRUTH, "unknown"),
    ]
    matrix = confusion_matrix(pairs)

    assert matrix["radiation_burst"]["radiation_peak"] == 1
    assert matrix[NO_TRUTH]["unknown"] == 1
    assert "unknown" not in matrix
    assert off_diagonal_fraction(matrix) == pytest.approx(0.5)
    assert off_diagonal_fraction(confusion_matrix([])) is None


def test_classified_csv(tmp_path, features_factory):
    events = classify_events([features_factory(), features_factory(end_s=None, capture_id=1)])
    path = tmp_path / "classified.csv"
    write_classified(path, events)
    loaded = read_classified(path)

    assert [event.klass for event in loaded] == [event.klass for event in events]
    assert loaded[1].features.end_undetermined
    assert loaded[0].criteria == events[0].criteria


def detection_harness(bursts, peaks, sawtooths, oscillations, seed):
    counts = {
        FaultKind.BURST: bursts,
        FaultKind.PEAK: peaks,
        FaultKind.SAWTOOTH: sawtooths,
        FaultKind.OSCILLATING: oscillations,
    }
    plan = fixed_plan(counts, 4e-3, rng_seed=seed, spurious=default_spurious())
    schedule = BeamSchedule(name="harness", duration_s=plan.span_s)
    captures = sparse_campaign(schedule, plan, DeviceParams(), TriggerConfig(), seed=seed)
    events = classify_events(analyze_captures(captures))
    pairs, missed = truth_pairs(events, plan, SampleClock())

    assigned_radiation = [truth for truth, assigned in pairs if assigned in RADIATION]
    found = [(truth, assigned) for truth, assigned in pairs if truth in RADIATION and assigned in RADIATION]
    precision = sum(truth in RADIATION for truth in assigned_radiation) / len(assigned_radiation)
    recall = len(found) / (bursts + peaks)
    accuracy = sum(truth == assigned for truth, assigned in found) / len(found)
    return precision, recall, accuracy, missed


def test_injected_events_are_recovered():
    precision, recall, accuracy, missed = detection_harness(20, 20, 10, 2, seed=21)
    assert precision >= 0.95
    assert recall >= 0.95
    assert accuracy >= 0.98
    assert missed == 0


@pytest.mark.slow
def test_injected_events_are_recovered_at_scale():
    precision, recall, accuracy, _ = detection_harness(100, 100, 50, 5, seed=22)
    assert precision >= 0.95
    assert recall >= 0.95
    assert accuracy >= 0.98
