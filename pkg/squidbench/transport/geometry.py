"""Dewar layer stack and substrate box seen by the transport Monte Carlo. Lengths in mm, coefficients in 1/cm."""
from dataclasses import (
    dataclass,
    field,
)
from enum import Enum
import math
from typing import (
    Dict,
    Tuple,
)

from squidbench.utils.errors import InvalidInputError
from squidbench.utils.settings import settings_section

MM_PER_CM = 10.0


class TransportSpecies(Enum):
    NEUTRON = "neutron"
    GAMMA = "gamma"

    @property
    def code(self) -> int:
        return 0 if self is TransportSpecies.NEUTRON else 1


@settings_section
@dataclass(frozen=True)
class Layer:
    name: str
    thickness_mm: float
    mu_per_cm: Dict[TransportSpecies, float]

    def __post_init__(self) -> None:
        if not self.thickness_mm > 0:
            raise InvalidInputError(f"layer {self.name} must have positive thickness")
        if any(mu < 0 for mu in self.mu_per_cm.values()):
            raise InvalidInputError(f"layer {self.name} has a negative attenuation coefficient")

    def mu(self, species: TransportSpecies) -> float:
        return self.mu_per_cm.get(species, 0.0)

    def survival(self, species: TransportSpecies) -> float:
        return math.exp(-self.mu(species) * self.thickness_mm / MM_PER_CM)


def _mu(neutron: float, gamma: float) -> Dict[TransportSpecies, float]:
    return {TransportSpecies.NEUTRON: neutron, TransportSpecies.GAMMA: gamma}


def default_layers() -> Tuple[Layer, ...]:
    return (
        Layer("aluminum", 2.0, _mu(0.10, 0.150)),
        Layer("glass", 10.0, _mu(0.10, 0.140)),
        Layer("liquid_nitrogen", 29.5, _mu(0.052, 0.046)),
        Layer("mu_metal", 0.5, _mu(0.26, 0.46)),
        Layer("liquid_nitrogen", 10.0, _mu(0.052, 0.046)),
    )


@settings_section
@dataclass(frozen=True)
class Geometry:
    layers: Tuple[Layer, ...] = field(default_factory=default_layers)
    substrate_mm: Tuple[float, float, float] = (1.2, 2.6, 1.0)
    substrate_mu_per_cm: Dict[TransportSpecies, float] = field(default_factory=lambda: _mu(0.1137, 0.29))
    film_um: Tuple[float, float] = (25.0, 150.0)
    frame_coverage: float = 0.22

    def __post_init__(self) -> None:
        if any(not side > 0 for side in self.substrate_mm):
            raise InvalidInputError("substrate dimensions must be positive")
        if not 0 <= self.frame_coverage <= 1:
            raise InvalidInputError(f"frame coverage must lie in [0, 1], got {self.frame_coverage}")
        width, height = self.film_mm
        if not (0 < width <= self.substrate_mm[0] * (1 + 1e-12) and 0 < height <= self.substrate_mm[1] * (1 + 1e-12)):
            raise InvalidInputError("film must fit on the substrate face")
        if any(mu < 0 for mu in self.substrate_mu_per_cm.values()):
            raise InvalidInputError("substrate attenuation coefficients must be non-negative")

    @property
    def film_mm(self) -> Tuple[float, float]:
        return self.film_um[0] * 1e-3, self.film_um[1] * 1e-3

    @property
    def film_bounds(self) -> Tuple[float, float, float, float]:
        """(x_lo, x_hi, y_lo, y_hi) of the film centered on the top face ``z = depth``."""
        width, height = self.film_mm
        cx, cy = self.substrate_mm[0] / 2.0, self.substrate_mm[1] / 2.0
        return cx - width / 2.0, cx + width / 2.0, cy - height / 2.0, cy + height / 2.0

    def substrate_mu(self, species: TransportSpecies) -> float:
        return self.substrate_mu_per_cm.get(species, 0.0)

    def shielding_survival(self, species: TransportSpecies) -> float:
        return math.prod(layer.survival(species) for layer in self.layers)

    def interaction_probability(self, species: TransportSpecies, scale: float = 1.0) -> float:
        """Probability that a normally incident primary crosses the stack and interacts in the substrate."""
        depth_cm = self.substrate_mm[2] / MM_PER_CM
        return self.shielding_survival(species) * -math.expm1(-self.substrate_mu(species) * scale * depth_cm)
