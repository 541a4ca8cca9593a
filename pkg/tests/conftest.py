"""Shared fixtures: desk-scale devices, schedules, captures and configuration files."""
from pathlib import Path
import textwrap
from typing import (
    Callable,
    Optional,
)

import pytest

from squidbench.acquisition import (
    AcquisitionConfig,
    CampaignSynthesizer,
    CaptureWindow,
    EventCapture,
    TriggerConfig,
    acquire,
)
from squidbench.analysis import (
    ChannelsAffected,
    EventFeatures,
    ShapeTag,
)
from squidbench.device import (
    DeviceParams,
    DriveConfig,
    SampleClock,
)
from squidbench.injection import (
    LABELS,
    BeamPattern,
    BeamSchedule,
    FaultKind,
    InjectionPlan,
    PlanEntry,
    Species,
    SpuriousTemplate,
    Template,
    default_burst_template,
    default_peak_template,
)

CAPTURE_TIME_S = 2e-3
CAPTURE_SPAN_S = 4e-3


def default_template(kind: FaultKind) -> Template:
    if kind is FaultKind.BURST:
        return default_burst_template()
    if kind is FaultKind.PEAK:
        return default_peak_template()
    return SpuriousTemplate(kind=kind)


def make_entry(
    kind: FaultKind,
    time_s: float = CAPTURE_TIME_S,
    duration_s: float = 100e-6,
    amplitude_mv: float = 90.0,
    polarity: int = 1,
    seed: int = 3,
    template: Optional[Template] = None,
    index: int = 0,
) -> PlanEntry:
    return PlanEntry(
        index=index,
        time_s=time_s,
        kind=kind,
        duration_s=duration_s,
        amplitude_mv=amplitude_mv,
        label=LABELS[kind],
        polarity=polarity,
        seed=seed,
        template=template or default_template(kind),
    )


def single_capture(
    kind: FaultKind,
    duration_s: float,
    amplitude_mv: float,
    device: Optional[DeviceParams] = None,
    trigger: Optional[TriggerConfig] = None,
    seed: int = 3,
    polarity: int = 1,
    window: Optional[CaptureWindow] = None,
) -> EventCapture:
    """The one capture of a 4 ms campaign holding a single event at 2 ms."""
    entry = make_entry(kind, duration_s=duration_s, amplitude_mv=amplitude_mv, seed=seed, polarity=polarity)
    plan = InjectionPlan(entries=(entry,), span_s=CAPTURE_SPAN_S)
    synthesizer = CampaignSynthesizer(
        device or DeviceParams(),
        DriveConfig(),
        SampleClock(),
        plan,
        CAPTURE_SPAN_S,
        seed,
        trigger or TriggerConfig(),
    )
    captures = list(acquire(synthesizer, window or CaptureWindow(), AcquisitionConfig()))
    assert len(captures) == 1
    return captures[0]


@pytest.fixture
def clock() -> SampleClock:
    return SampleClock()


@pytest.fixture
def device() -> DeviceParams:
    return DeviceParams()


@pytest.fixture
def quiet_device() -> DeviceParams:
    return DeviceParams(noise_sigma_voltage=0.0, noise_sigma_current=0.0)


@pytest.fixture
def short_schedule() -> BeamSchedule:
    return BeamSchedule(
        name="short",
        patterns=(BeamPattern(species=Species.NEUTRON_14MEV, flux=1e6, on_s=60.0, off_s=20.0, cycles=3),),
    )


@pytest.fixture(scope="session")
def make_capture() -> Callable[..., EventCapture]:
    return single_capture


@pytest.fixture
def entry_factory() -> Callable[..., PlanEntry]:
    return make_entry


@pytest.fixture
def features_factory() -> Callable[..., EventFeatures]:
    def build(**overrides) -> EventFeatures:
        values = dict(
            capture_id=0,
            trigger_time_s=10.0,
            onset_s=-1e-7,
            end_s=1e-4,
            duration_s=1e-4,
            max_amplitude_mv=120.0,
            max_excursion_mv=115.0,
            channels_affected=ChannelsAffected.BOTH,
            shape_tag=ShapeTag.TELEGRAPH,
            threshold_mv=30.0,
        )
        values.update(overrides)
        return EventFeatures(**values)

    return build


DESK_CONFIG = """\
name: desk
facility: NILE
seed: 7
schedule:
  name: desk
  patterns:
    - {species: neutron_14MeV, flux: 2.0e+5, on_s: 0.02, off_s: 0.01, cycles: 2}
sigma:
  neutron_14MeV: 1.0e-3
spurious:
  - {kind: sawtooth, rate_per_hour: 36000.0}
transport:
  count: 400
  batch_size: 100
  bootstrap_resamples: 20
  cascade: {max_tracked: 64}
"""


@pytest.fixture(scope="session")
def desk_config_path(tmp_path_factory: pytest.TempPathFactory) -> Path:
    """A 60 ms campaign with a handful of events, small enough for unit tests."""
    path = tmp_path_factory.mktemp("config") / "desk.yaml"
    path.write_text(textwrap.dedent(DESK_CONFIG), encoding="utf-8")
    return path
