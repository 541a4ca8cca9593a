"""Energy deposit to e-/h+ pairs and the phonon downconversion cascade.

A MeV deposit ends in ~10^9 ballistic phonons, so the cascade is tracked with
at most ``max_tracked`` macro-phonons. Splitting stops at an effective threshold
``max(threshold, 2 E / max_tracked)``; a tracked phonon of energy ``e`` above the
physical threshold stands for ``2 e / threshold`` real phonons, the expected
number a uniform binary split of ``e`` produces.
"""
from dataclasses import (
    dataclass,
    field,
)
import math
from typing import (
    Dict,
    Tuple,
)

import numpy as np

from squidbench.transport.geometry import TransportSpecies
from squidbench.transport.tally import EV_PER_MEV
from squidbench.transport.tracing import DepositionEvent
from squidbench.utils.errors import InvalidInputError
from squidbench.utils.settings import settings_section


def _default_prompt_loss() -> Dict[TransportSpecies, float]:
    return {TransportSpecies.NEUTRON: 0.214, TransportSpecies.GAMMA: 0.05}


@settings_section
@dataclass(frozen=True)
class CascadeConfig:
    gap_ev: float = 1.1
    pair_energy_factor: float = 3.0
    ballistic_threshold_ev: float = 1e-3
    prompt_loss_fraction: Dict[TransportSpecies, float] = field(default_factory=_default_prompt_loss)
    max_tracked: int = 2048
    recombination_tau_ns: float = 1.0
    luke_fraction: float = 0.1

    def __post_init__(self) -> None:
        if not (self.gap_ev > 0 and self.pair_energy_factor > 0 and self.ballistic_threshold_ev > 0):
            raise InvalidInputError("cascade energies must be positive")
        if self.max_tracked < 2:
            raise InvalidInputError("max_tracked must be at least 2")
        if any(not 0 <= fraction < 1 for fraction in self.prompt_loss_fraction.values()):
            raise InvalidInputError("prompt loss fractions must lie in [0, 1)")
        if self.recombination_tau_ns < 0 or not 0 <= self.luke_fraction <= 1:
            raise InvalidInputError("invalid recombination delay or LUKE fraction")

    @property
    def pair_energy_ev(self) -> float:
        return self.pair_energy_factor * self.gap_ev


@dataclass(frozen=True, eq=False)
class CarrierSet:
    deposit_ev: float
    prompt_loss_ev: float
    pair_count: int
    initial_phonons: int
    energies_ev: np.ndarray
    weights: np.ndarray
    positions_mm: np.ndarray
    directions: np.ndarray
    birth_ns: np.ndarray
    luke: np.ndarray

    def __len__(self) -> int:
        return len(self.energies_ev)

    @property
    def carrier_ev(self) -> float:
        return math.fsum(self.energies_ev.tolist())

    @property
    def phonon_count(self) -> float:
        return float(np.sum(self.weights))


def isotropic_directions(rng: np.random.Generator, size: int) -> np.ndarray:
    vectors = rng.standard_normal((size, 3))
    norms = np.linalg.norm(vectors, axis=1, keepdims=True)
    # a zero draw has probability zero but would divide by zero
    norms[norms == 0] = 1.0
    return vectors / norms


def downconvert(
    energies: np.ndarray,
    threshold: float,
    rng: np.random.Generator,
    *attributes: np.ndarray,
) -> Tuple[np.ndarray, ...]:
    """Split every phonon above ``threshold`` in two at a uniform fraction until none is left above it."""
    energies = np.asarray(energies, dtype=np.float64)
    while True:
        splitting = energies > threshold
        if not np.any(splitting):
            return (energies, *attributes)

        parents = energies[splitting]
        first = parents * rng.random(len(parents))
        second = parents - first
        energies = np.concatenate((energies[~splitting], first, second))
        attributes = tuple(
            np.concatenate((values[~splitting], values[splitting], values[splitting]))
            for values in attributes
        )


def cascade(
    deposit: DepositionEvent,
    cascade_config: CascadeConfig,
    rng: np.random.Generator,
    species: TransportSpecies = TransportSpecies.NEUTRON,
) -> CarrierSet:
    if not deposit.energy_mev > 0:
        raise InvalidInputError(f"deposit energy must be positive, got {deposit.energy_mev}")

    cfg = cascade_config
    deposit_ev = deposit.energy_mev * EV_PER_MEV
    prompt_loss = deposit_ev * cfg.prompt_loss_fraction.get(species, 0.0)
    carrier = deposit_ev - prompt_loss

    pairs = int(math.floor(carrier / cfg.pair_energy_ev))
    residual = carrier - pairs * cfg.pair_energy_ev

    bundle_energies = np.zeros(0)
    if pairs > 0:
        bundles = min(pairs, cfg.max_tracked // 2)
        sizes = np.full(bundles, pairs // bundles, dtype=np.int64)
        sizes[:pairs % bundles] += 1
        bundle_energies = sizes * cfg.pair_energy_ev

    energies = np.concatenate((bundle_energies, [residual] if residual > 0 else []))
    birth = np.concatenate((
        rng.exponential(cfg.recombination_tau_ns, len(bundle_energies)) if cfg.recombination_tau_ns > 0 else np.zeros(len(bundle_energies)),
        np.zeros(len(energies) - len(bundle_energies)),
    ))
    luke = np.concatenate((
        rng.random(len(bundle_energies)) < cfg.luke_fraction,
        np.zeros(len(energies) - len(bundle_energies), dtype=bool),
    ))
    initial = len(energies)

    threshold = cfg.ballistic_threshold_ev
    tracked_threshold = max(threshold, 2.0 * carrier / cfg.max_tracked)
    energies, birth, luke = downconvert(energies, tracked_threshold, rng, birth, luke)
    weights = np.where(energies > threshold, 2.0 * energies / threshold, 1.0)

    return CarrierSet(
        deposit_ev=deposit_ev,
        prompt_loss_ev=prompt_loss,
        pair_count=pairs,
        initial_phonons=initial,
        energies_ev=energies,
        weights=weights,
        positions_mm=np.tile(np.asarray(deposit.position_mm, dtype=np.float64), (len(energies), 1)),
        directions=isotropic_directions(rng, len(energies)),
        birth_ns=birth,
        luke=luke,
    )
