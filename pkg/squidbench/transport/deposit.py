"""Parameterized single-collision deposit spectra in the substrate (MeV)."""
from dataclasses import dataclass
from functools import lru_cache
from typing import (
    Optional,
    Tuple,
    Union,
)

import numpy as np
from scipy.integrate import (
    cumulative_trapezoid,
    trapezoid,
)
from scipy.optimize import brentq

from squidbench.transport.geometry import TransportSpecies
from squidbench.utils.errors import InvalidInputError
from squidbench.utils.settings import settings_section

ELECTRON_MASS_MEV = 0.51099895


@settings_section
@dataclass(frozen=True)
class NeutronDepositModel:
    """Elastic recoils as a power law plus a flat inelastic component.

    Energies are quoted for ``reference_energy_mev`` primaries and scale
    linearly for other primary energies.
    """

    elastic_alpha: float = 1.5
    elastic_low_mev: float = 1e-3
    elastic_high_mev: float = 3.1
    inelastic_low_mev: float = 0.5
    inelastic_high_mev: float = 14.0
    inelastic_weight: Optional[float] = None
    target_fraction_above: float = 0.25
    target_threshold_mev: float = 1.25
    reference_energy_mev: float = 14.0

    def __post_init__(self) -> None:
        if not 0 < self.elastic_low_mev < self.elastic_high_mev:
            raise InvalidInputError("elastic bounds must satisfy 0 < low < high")
        if not 0 <= self.inelastic_low_mev < self.inelastic_high_mev:
            raise InvalidInputError("inelastic bounds must satisfy 0 <= low < high")
        if self.elastic_alpha == 1.0:
            raise InvalidInputError("elastic_alpha = 1 is not supported")
        if self.inelastic_weight is not None and not 0 <= self.inelastic_weight <= 1:
            raise InvalidInputError("inelastic_weight must lie in [0, 1]")

    def elastic_sf(self, energy: Union[float, np.ndarray]) -> np.ndarray:
        power = 1.0 - self.elastic_alpha
        e = np.clip(np.asarray(energy, dtype=np.float64), self.elastic_low_mev, self.elastic_high_mev)
        low, high = self.elastic_low_mev**power, self.elastic_high_mev**power
        return (high - e**power) / (high - low)

    def inelastic_sf(self, energy: Union[float, np.ndarray]) -> np.ndarray:
        e = np.clip(np.asarray(energy, dtype=np.float64), self.inelastic_low_mev, self.inelastic_high_mev)
        return (self.inelastic_high_mev - e) / (self.inelastic_high_mev - self.inelastic_low_mev)

    def weight(self) -> float:
        if self.inelastic_weight is not None:
            return self.inelastic_weight
        return calibrate_inelastic_weight(self)

    def cdf(self, energy: Union[float, np.ndarray]) -> np.ndarray:
        w = self.weight()
        return 1.0 - (w * self.inelastic_sf(energy) + (1.0 - w) * self.elastic_sf(energy))

    def fraction_above(self, threshold_mev: float) -> float:
        return float(1.0 - self.cdf(threshold_mev))

    def mean(self) -> float:
        power = 2.0 - self.elastic_alpha
        low, high = self.elastic_low_mev, self.elastic_high_mev
        norm = (high ** (1.0 - self.elastic_alpha) - low ** (1.0 - self.elastic_alpha)) / (1.0 - self.elastic_alpha)
        elastic = (high**power - low**power) / power / norm
        inelastic = (self.inelastic_low_mev + self.inelastic_high_mev) / 2.0
        w = self.weight()
        return w * inelastic + (1.0 - w) * elastic

    def sample(self, rng: np.random.Generator, size: int, energy_mev: Optional[float] = None) -> np.ndarray:
        w = self.weight()
        inelastic = rng.random(size) < w
        u = rng.random(size)

        power = 1.0 - self.elastic_alpha
        low, high = self.elastic_low_mev**power, self.elastic_high_mev**power
        elastic_energy = (low + u * (high - low)) ** (1.0 / power)
        inelastic_energy = self.inelastic_low_mev + u * (self.inelastic_high_mev - self.inelastic_low_mev)

        deposits = np.where(inelastic, inelastic_energy, elastic_energy)
        if energy_mev is not None:
            deposits = deposits * (energy_mev / self.reference_energy_mev)
        return deposits


@lru_cache(maxsize=32)
def calibrate_inelastic_weight(model: NeutronDepositModel) -> float:
    """Inelastic weight giving ``target_fraction_above`` of deposits above ``target_threshold_mev``."""
    elastic = float(model.elastic_sf(model.target_threshold_mev))
    inelastic = float(model.inelastic_sf(model.target_threshold_mev))
    gap = lambda w: w * inelastic + (1.0 - w) * elastic - model.target_fraction_above  # noqa: E731
    if gap(0.0) * gap(1.0) > 0:
        raise InvalidInputError(
            f"no inelastic weight reaches {model.target_fraction_above} above {model.target_threshold_mev} MeV",
        )
    return float(brentq(gap, 0.0, 1.0, xtol=1e-14))


@lru_cache(maxsize=16)
def compton_table(energy_mev: float, points: int = 4096) -> Tuple[np.ndarray, np.ndarray]:
    k = energy_mev / ELECTRON_MASS_MEV
    t_max = energy_mev * 2.0 * k / (1.0 + 2.0 * k)
    kinetic = np.linspace(0.0, t_max, points)
    s = kinetic / energy_mev
    # the endpoint s = t_max / E keeps 1 - s > 0
    density = 2.0 + s**2 / (k**2 * (1.0 - s) ** 2) + s / (1.0 - s) * (s - 2.0 / k)
    cdf = cumulative_trapezoid(density, kinetic, initial=0.0)
    return kinetic, cdf / cdf[-1]


@settings_section
@dataclass(frozen=True)
class GammaDepositModel:

    energy_mev: float = 1.25
    photopeak_fraction: float = 0.02
    table_points: int = 4096

    def __post_init__(self) -> None:
        if not self.energy_mev > 0 or not 0 <= self.photopeak_fraction <= 1:
            raise InvalidInputError("invalid gamma deposit model")

    def cdf(self, energy: Union[float, np.ndarray], energy_mev: Optional[float] = None) -> np.ndarray:
        primary = energy_mev or self.energy_mev
        kinetic, cdf = compton_table(primary, self.table_points)
        e = np.asarray(energy, dtype=np.float64)
        compton = np.interp(e, kinetic, cdf, left=0.0, right=1.0)
        return (1.0 - self.photopeak_fraction) * compton + self.photopeak_fraction * (e >= primary)

    def mean(self) -> float:
        kinetic, cdf = compton_table(self.energy_mev, self.table_points)
        compton = float(kinetic[-1] - trapezoid(cdf, kinetic))
        return (1.0 - self.photopeak_fraction) * compton + self.photopeak_fraction * self.energy_mev

    def sample(self, rng: np.random.Generator, size: int, energy_mev: Optional[float] = None) -> np.ndarray:
        primary = energy_mev or self.energy_mev
        kinetic, cdf = compton_table(primary, self.table_points)
        photopeak = rng.random(size) < self.photopeak_fraction
        compton = np.interp(rng.random(size), cdf, kinetic)
        return np.where(photopeak, primary, compton)


DepositModel = Union[NeutronDepositModel, GammaDepositModel]


def sample_deposit_energy(
    species: TransportSpecies,
    rng: np.random.Generator,
    model: Optional[DepositModel] = None,
    size: Optional[int] = None,
    energy_mev: Optional[float] = None,
) -> Union[float, np.ndarray]:
    if model is None:
        model = NeutronDepositModel() if species is TransportSpecies.NEUTRON else GammaDepositModel()
    deposits = model.sample(rng, 1 if size is None else size, energy_mev)
    if size is None:
        return float(deposits[0])
    return deposits
