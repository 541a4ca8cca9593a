from dataclasses import (
    dataclass,
    field,
)
from enum import Enum
from typing import (
    Dict,
    Optional,
    Tuple,
)

import numpy as np

from squidbench.transport.deposit import (
    DepositModel,
    GammaDepositModel,
    NeutronDepositModel,
)
from squidbench.transport.geometry import (
    MM_PER_CM,
    Geometry,
    TransportSpecies,
)
from squidbench.utils.errors import InvalidInputError
from squidbench.utils.settings import settings_section


@settings_section
@dataclass(frozen=True)
class PrimarySpec:
    species: TransportSpecies
    energy_mev: float
    count: int = 1
    # optional discrete spectrum of (energy MeV, weight); replaces the monoenergetic beam
    spectrum: Tuple[Tuple[float, float], ...] = ()

    def __post_init__(self) -> None:
        if not self.energy_mev > 0:
            raise InvalidInputError(f"primary energy must be positive, got {self.energy_mev}")
        if self.count < 1:
            raise InvalidInputError(f"primary count must be at least 1, got {self.count}")
        if any(energy <= 0 or weight < 0 for energy, weight in self.spectrum):
            raise InvalidInputError("spectrum energies must be positive and weights non-negative")

    def sample_energies(self, rng: np.random.Generator, size: int) -> np.ndarray:
        if not self.spectrum:
            return np.full(size, self.energy_mev)
        energies = np.array([energy for energy, _ in self.spectrum])
        weights = np.array([weight for _, weight in self.spectrum])
        return rng.choice(energies, size=size, p=weights / weights.sum())


@settings_section
@dataclass(frozen=True)
class InteractionScaling:
    """Multiplier on the substrate coefficient, interpolated in log energy and held flat outside the table."""

    table: Tuple[Tuple[float, float], ...] = ()

    def factor(self, energy_mev: np.ndarray) -> np.ndarray:
        energy = np.asarray(energy_mev, dtype=np.float64)
        if not self.table:
            return np.ones_like(energy)
        points = sorted(self.table)
        log_energy = np.log([point for point, _ in points])
        factors = [factor for _, factor in points]
        return np.interp(np.log(energy), log_energy, factors)


def default_scaling() -> Dict[TransportSpecies, InteractionScaling]:
    return {
        TransportSpecies.NEUTRON: InteractionScaling(((1.0, 0.1), (10.0, 1.0), (100.0, 1.0))),
        TransportSpecies.GAMMA: InteractionScaling(),
    }


def default_models() -> Dict[TransportSpecies, DepositModel]:
    return {TransportSpecies.NEUTRON: NeutronDepositModel(), TransportSpecies.GAMMA: GammaDepositModel()}


@dataclass(frozen=True)
class DepositionEvent:
    position_mm: Tuple[float, float, float]
    energy_mev: float


class TraceOutcome(Enum):
    NO_INTERACTION = "no_interaction"
    SHIELDING_LOSS = "shielding_loss"
    DEPOSIT = "deposit"


@dataclass(frozen=True)
class TraceResult:
    outcome: TraceOutcome
    deposit: Optional[DepositionEvent] = None
    layer: Optional[str] = None


@dataclass(frozen=True, eq=False)
class BatchTrace:
    """Outcome of ``count`` primaries; ``rows`` index the interacting primaries within the batch."""

    count: int
    shielding_losses: Dict[str, int]
    rows: np.ndarray
    positions_mm: np.ndarray
    energies_mev: np.ndarray
    primary_energies_mev: np.ndarray = field(default_factory=lambda: np.zeros(0))


def _free_paths(rng: np.random.Generator, mu_per_cm: np.ndarray) -> np.ndarray:
    """Exponential free paths in mm; a zero coefficient never interacts."""
    mu = np.asarray(mu_per_cm, dtype=np.float64)
    paths = np.full(mu.shape, np.inf)
    positive = mu > 0
    paths[positive] = rng.exponential(MM_PER_CM / mu[positive])
    return paths


def trace_batch(
    primary: PrimarySpec,
    count: int,
    geometry: Geometry,
    rng: np.random.Generator,
    model: Optional[DepositModel] = None,
    scaling: Optional[InteractionScaling] = None,
) -> BatchTrace:
    species = primary.species
    model = model or default_models()[species]
    scaling = scaling or default_scaling()[species]

    energies = primary.sample_energies(rng, count)
    alive = np.ones(count, dtype=bool)
    losses: Dict[str, int] = {}
    for index, layer in enumerate(geometry.layers):
        paths = _free_paths(rng, np.full(count, layer.mu(species)))
        stopped = alive & (paths < layer.thickness_mm)
        key = f"{index}:{layer.name}"
        losses[key] = int(np.count_nonzero(stopped))
        alive &= ~stopped

    length_x, length_y, depth = geometry.substrate_mm
    x = rng.uniform(0.0, length_x, count)
    y = rng.uniform(0.0, length_y, count)
    z = _free_paths(rng, geometry.substrate_mu(species) * scaling.factor(energies))
    if isinstance(model, NeutronDepositModel):
        deposits = model.sample(rng, count, None) * (energies / model.reference_energy_mev)
    else:
        deposits = model.sample(rng, count, primary.energy_mev)
        if primary.spectrum:
            deposits = np.minimum(deposits * (energies / primary.energy_mev), energies)

    interacting = alive & (z < depth) & (deposits > 0)
    rows = np.flatnonzero(interacting)

    return BatchTrace(
        count=count,
        shielding_losses=losses,
        rows=rows,
        positions_mm=np.column_stack((x[rows], y[rows], z[rows])),
        energies_mev=deposits[rows],
        primary_energies_mev=energies[rows],
    )


def trace_primary(
    primary: PrimarySpec,
    geometry: Geometry,
    rng: np.random.Generator,
    model: Optional[DepositModel] = None,
    scaling: Optional[InteractionScaling] = None,
) -> TraceResult:
    species = primary.species
    model = model or default_models()[species]
    scaling = scaling or default_scaling()[species]
    energy = float(primary.sample_energies(rng, 1)[0])

    for layer in geometry.layers:
        if _free_paths(rng, np.array([layer.mu(species)]))[0] < layer.thickness_mm:
            return TraceResult(outcome=TraceOutcome.SHIELDING_LOSS, layer=layer.name)

    length_x, length_y, depth = geometry.substrate_mm
    position = (float(rng.uniform(0.0, length_x)), float(rng.uniform(0.0, length_y)))
    z = float(_free_paths(rng, geometry.substrate_mu(species) * scaling.factor(np.array([energy])))[0])
    if z >= depth:
        return TraceResult(outcome=TraceOutcome.NO_INTERACTION)

    if isinstance(model, NeutronDepositModel):
        deposit = float(model.sample(rng, 1, energy)[0])
    else:
        deposit = min(float(model.sample(rng, 1, energy)[0]), energy)
    return TraceResult(
        outcome=TraceOutcome.DEPOSIT,
        deposit=DepositionEvent(position_mm=(position[0], position[1], z), energy_mev=deposit),
    )
