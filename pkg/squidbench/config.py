from dataclasses import (
    dataclass,
    field,
    replace,
)
from functools import lru_cache
import logging
import os
from pathlib import Path
from typing import (
    Any,
    Dict,
    List,
    Mapping,
    Optional,
    Tuple,
    Union,
)

from pydantic import (
    TypeAdapter,
    ValidationError,
)
import yaml

from squidbench.acquisition import (
    AcquisitionConfig,
    CaptureWindow,
    TriggerConfig,
)
from squidbench.analysis import AnalysisConfig
from squidbench.classification import ClassifierConfig
from squidbench.device import (
    DeviceParams,
    DriveConfig,
    SampleClock,
)
from squidbench.injection import (
    BeamPattern,
    BeamSchedule,
    FaultKind,
    FaultMix,
    Species,
    SpuriousTemplate,
)
from squidbench.statistics import StatisticsConfig
from squidbench.transport.runner import TransportConfig
from squidbench.utils.errors import ConfigError
from squidbench.utils.settings import settings_section

CONFIG_ENV = "SQUIDBENCH_CONFIG"
DEFAULT_PRESET = "nile-e1"
PRESETS_DIR = Path(__file__).parent / "presets"


def default_schedule() -> BeamSchedule:
    return BeamSchedule(
        name=DEFAULT_PRESET,
        patterns=(
            BeamPattern(species=Species.NEUTRON_14MEV, flux=3.3e6, on_s=1800.0, off_s=600.0, cycles=9),
            BeamPattern(species=Species.GAMMA_1_25MEV, flux=2.31e5, on_s=1800.0, off_s=600.0, cycles=9),
        ),
    )


def default_spurious() -> Tuple[SpuriousTemplate, ...]:
    return (
        SpuriousTemplate(kind=FaultKind.SAWTOOTH),
        SpuriousTemplate(kind=FaultKind.OSCILLATING, rate_per_hour=0.1),
    )


@settings_section
@dataclass(frozen=True)
class CampaignConfig:
    name: str = DEFAULT_PRESET
    facility: str = "NILE"
    seed: int = 0
    output: str = "runs"
    device: DeviceParams = field(default_factory=DeviceParams)
    drive: DriveConfig = field(default_factory=DriveConfig)
    clock: SampleClock = field(default_factory=SampleClock)
    schedule: BeamSchedule = field(default_factory=default_schedule)
    # generator cross section per species, cm^2
    sigma: Dict[Species, float] = field(default_factory=lambda: {Species.NEUTRON_14MEV: 2.0e-9, Species.GAMMA_1_25MEV: 0.0})
    faults: FaultMix = field(default_factory=FaultMix)
    spurious: Tuple[SpuriousTemplate, ...] = field(default_factory=default_spurious)
    trigger: TriggerConfig = field(default_factory=TriggerConfig)
    window: CaptureWindow = field(default_factory=CaptureWindow)
    acquisition: AcquisitionConfig = field(default_factory=AcquisitionConfig)
    analysis: AnalysisConfig = field(default_factory=AnalysisConfig)
    classifier: ClassifierConfig = field(default_factory=ClassifierConfig)
    statistics: StatisticsConfig = field(default_factory=StatisticsConfig)
    transport: TransportConfig = field(default_factory=TransportConfig)

    @property
    def output_dir(self) -> Path:
        return Path(self.output)


@lru_cache(maxsize=None)
def _adapter(kind: type) -> TypeAdapter:
    return TypeAdapter(kind)


def _describe(error: ValidationError) -> str:
    problems = []
    for item in error.errors():
        where = ".".join(str(part) for part in item["loc"]) or "config"
        problems.append(f"{where}: {item['msg']}")
    return "; ".join(problems)


def config_from_dict(data: Mapping[str, Any]) -> CampaignConfig:
    """Settings absent from ``data`` keep their defaults; unknown keys at any level are rejected."""
    if not isinstance(data, Mapping):
        raise ConfigError("configuration root must be a mapping")
    try:
        return _adapter(CampaignConfig).validate_python(dict(data))
    except ValidationError as error:
        raise ConfigError(_describe(error)) from error
    except ValueError as error:
        raise ConfigError(str(error)) from error


def config_to_dict(value: Any) -> Any:
    return _adapter(type(value)).dump_python(value, mode="json")


def available_presets() -> List[str]:
    return sorted(path.stem for path in PRESETS_DIR.glob("*.yaml"))


def preset_path(name: str) -> Path:
    path = PRESETS_DIR / f"{name}.yaml"
    if not path.exists():
        raise ConfigError(f"unknown preset {name!r}; available: {', '.join(available_presets())}")
    return path


def load_config_file(path: Union[str, Path]) -> CampaignConfig:
    path = Path(path)
    try:
        with open(path, "r", encoding="utf-8") as f:
            data = yaml.safe_load(f)
    except OSError as error:
        raise ConfigError(f"cannot read config {path}: {error}") from error
    except yaml.YAMLError as error:
        raise ConfigError(f"{path} is not valid YAML: {error}") from error

    logging.debug(f"Loaded configuration from {path}")
    return config_from_dict(data or {})


def load_preset(name: str) -> CampaignConfig:
    return load_config_file(preset_path(name))


def resolve_config(
    config_path: Optional[str] = None,
    preset: Optional[str] = None,
    seed: Optional[int] = None,
    output: Optional[str] = None,
) -> CampaignConfig:
    """``--config``, then ``--preset``, then ``$SQUIDBENCH_CONFIG``, then the default preset; flags override the file."""
    if config_path and preset:
        raise ConfigError("--config and --preset are mutually exclusive")

    if config_path:
        cfg = load_config_file(config_path)
    elif preset:
        cfg = load_preset(preset)
    elif os.environ.get(CONFIG_ENV):
        cfg = load_config_file(os.environ[CONFIG_ENV])
    else:
        cfg = load_preset(DEFAULT_PRESET)

    overrides: Dict[str, Any] = {}
    if seed is not None:
        overrides["seed"] = seed
    if output is not None:
        overrides["output"] = output
    return replace(cfg, **overrides) if overrides else cfg
