from dataclasses import dataclass
from enum import IntEnum
import logging
from typing import (
    Sequence,
)

import numpy as np

from squidbench.transport.cascade import CarrierSet
from squidbench.transport.geometry import (
    Geometry,
    TransportSpecies,
)
from squidbench.transport.tally import TransportTally
from squidbench.utils.errors import InvalidInputError
from squidbench.utils.settings import settings_section


@settings_section
@dataclass(frozen=True)
class PropagationConfig:
    # placeholder for the substrate; only species ratios are meaningful
    speed_mm_per_ns: float = 0.006
    specular_probability: float = 0.5
    survival_per_bounce: float = 0.95
    max_bounces: int = 2000

    def __post_init__(self) -> None:
        if not self.speed_mm_per_ns > 0:
            raise InvalidInputError("phonon speed must be positive")
        if not (0 <= self.specular_probability <= 1 and 0 <= self.survival_per_bounce <= 1):
            raise InvalidInputError("specular and survival probabilities must lie in [0, 1]")
        if self.max_bounces < 1:
            raise InvalidInputError("max_bounces must be at least 1")


class PhononFate(IntEnum):
    FILM = 0
    FRAME = 1
    THERMALIZED = 2
    ESCAPED = 3


@dataclass(frozen=True, eq=False)
class PropagationResult:
    fate: np.ndarray
    time_ns: np.ndarray
    bounces: np.ndarray

    def fraction(self, fate: PhononFate) -> float:
        return float(np.mean(self.fate == fate)) if len(self.fate) else 0.0


def _lambertian(rng: np.random.Generator, axis: np.ndarray, inward: np.ndarray) -> np.ndarray:
    """Cosine-weighted directions about the inward normal of axis-aligned walls."""
    count = len(axis)
    cos_theta = np.sqrt(rng.random(count))
    sin_theta = np.sqrt(1.0 - cos_theta**2)
    phi = 2.0 * np.pi * rng.random(count)

    directions = np.empty((count, 3))
    rows = np.arange(count)
    first = (axis + 1) % 3
    second = (axis + 2) % 3
    directions[rows, axis] = inward * cos_theta
    directions[rows, first] = sin_theta * np.cos(phi)
    directions[rows, second] = sin_theta * np.sin(phi)
    return directions


def propagate_phonons(
    positions_mm: np.ndarray,
    directions: np.ndarray,
    birth_ns: np.ndarray,
    geometry: Geometry,
    rng: np.random.Generator,
    propagation: PropagationConfig = PropagationConfig(),
) -> PropagationResult:
    """Straight flights between wall hits; each hit absorbs, kills or reflects the phonon."""
    positions = np.array(positions_mm, dtype=np.float64, copy=True)
    directions = np.array(directions, dtype=np.float64, copy=True)
    count = len(positions)
    box = np.asarray(geometry.substrate_mm, dtype=np.float64)
    if np.any(positions < 0) or np.any(positions > box):
        raise InvalidInputError("phonons must start inside the substrate")

    x_lo, x_hi, y_lo, y_hi = geometry.film_bounds
    time = np.array(birth_ns, dtype=np.float64, copy=True)
    fate = np.full(count, PhononFate.ESCAPED, dtype=np.int8)
    bounces = np.zeros(count, dtype=np.int64)
    alive = np.arange(count)

    for _ in range(propagation.max_bounces):
        if not len(alive):
            break
        p, d = positions[alive], directions[alive]
        with np.errstate(divide="ignore", invalid="ignore"):
            distance = np.where(d > 0, (box - p) / d, np.where(d < 0, -p / d, np.inf))
        axis = np.argmin(distance, axis=1)
        rows = np.arange(len(alive))
        step = np.maximum(distance[rows, axis], 0.0)

        p = p + step[:, None] * d
        upper = d[rows, axis] > 0
        p[rows, axis] = np.where(upper, box[axis], 0.0)
        time[alive] += step / propagation.speed_mm_per_ns
        bounces[alive] += 1

        film = (axis == 2) & upper & (p[:, 0] >= x_lo) & (p[:, 0] <= x_hi) & (p[:, 1] >= y_lo) & (p[:, 1] <= y_hi)
        draw = rng.random(len(alive))
        frame = ~film & (draw < geometry.frame_coverage)
        survive = rng.random(len(alive)) < propagation.survival_per_bounce
        thermalized = ~film & ~frame & ~survive

        fate[alive[film]] = PhononFate.FILM
        fate[alive[frame]] = PhononFate.FRAME
        fate[alive[thermalized]] = PhononFate.THERMALIZED

        reflecting = ~(film | frame | thermalized)
        specular = rng.random(len(alive)) < propagation.specular_probability
        mirror = reflecting & specular
        d[rows[mirror], axis[mirror]] *= -1.0
        diffuse = reflecting & ~specular
        if np.any(diffuse):
            d[diffuse] = _lambertian(rng, axis[diffuse], np.where(upper[diffuse], -1.0, 1.0))

        positions[alive], directions[alive] = p, d
        alive = alive[reflecting]
    else:
        if len(alive):
            logging.debug(f"{len(alive)} phonons reached the bounce cap and are counted as escaped")

    return PropagationResult(fate=fate, time_ns=time, bounces=bounces)


def propagate_carriers(
    carrier_sets: Sequence[CarrierSet],
    geometry: Geometry,
    rng: np.random.Generator,
    propagation: PropagationConfig = PropagationConfig(),
    species: TransportSpecies = TransportSpecies.NEUTRON,
    primaries: int = 0,
    primary_energies_mev: Sequence[float] = (),
) -> TransportTally:
    """Propagate the phonons of several deposits in one pass and tally them per deposit."""
    rows = len(carrier_sets)
    sizes = np.array([len(carriers) for carriers in carrier_sets], dtype=np.int64)
    owner = np.repeat(np.arange(rows), sizes)

    def stacked(name: str, width: int = 0) -> np.ndarray:
        if not rows:
            return np.zeros((0, width)) if width else np.zeros(0)
        return np.concatenate([getattr(carriers, name) for carriers in carrier_sets])

    energies = stacked("energies_ev")
    weights = stacked("weights")
    result = propagate_phonons(
        stacked("positions_mm", 3),
        stacked("directions", 3),
        stacked("birth_ns"),
        geometry,
        rng,
        propagation,
    )

    def per_row(fate: PhononFate, values: np.ndarray) -> np.ndarray:
        mask = result.fate == fate
        return np.bincount(owner[mask], weights=values[mask], minlength=rows)

    on_film = result.fate == PhononFate.FILM
    return TransportTally(
        species=species,
        primaries=primaries or rows,
        deposit_ev=np.array([carriers.deposit_ev for carriers in carrier_sets], dtype=np.float64),
        primary_energy_mev=(
            np.asarray(primary_energies_mev, dtype=np.float64) if len(primary_energies_mev) else np.full(rows, np.nan)
        ),
        pair_count=np.array([carriers.pair_count for carriers in carrier_sets], dtype=np.int64),
        prompt_loss_ev=np.array([carriers.prompt_loss_ev for carriers in carrier_sets], dtype=np.float64),
        film_ev=per_row(PhononFate.FILM, energies),
        frame_ev=per_row(PhononFate.FRAME, energies),
        thermalized_ev=per_row(PhononFate.THERMALIZED, energies),
        escaped_ev=per_row(PhononFate.ESCAPED, energies),
        film_count=per_row(PhononFate.FILM, weights),
        film_hits=np.bincount(owner[on_film], minlength=rows).astype(np.int64),
        times_ns=result.time_ns[on_film],
        time_weights=weights[on_film],
        time_owner=owner[on_film],
    )


def propagate(
    carriers: CarrierSet,
    geometry: Geometry,
    rng: np.random.Generator,
    propagation: PropagationConfig = PropagationConfig(),
    species: TransportSpecies = TransportSpecies.NEUTRON,
) -> TransportTally:
    return propagate_carriers([carriers], geometry, rng, propagation, species)
