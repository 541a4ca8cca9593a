from dataclasses import (
    dataclass,
    field,
    replace,
)
import logging
from typing import (
    Dict,
    List,
    Optional,
    Tuple,
)

from joblib import (
    Parallel,
    delayed,
)
import numpy as np

from squidbench.transport.cascade import (
    CascadeConfig,
    cascade,
)
from squidbench.transport.deposit import (
    DepositModel,
    GammaDepositModel,
    NeutronDepositModel,
)
from squidbench.transport.geometry import (
    Geometry,
    TransportSpecies,
)
from squidbench.transport.propagation import (
    PropagationConfig,
    propagate_carriers,
)
from squidbench.transport.tally import (
    RatioReport,
    TransportTally,
    compare_species,
    merge_tallies,
)
from squidbench.transport.tracing import (
    DepositionEvent,
    InteractionScaling,
    PrimarySpec,
    default_scaling,
    trace_batch,
)
from squidbench.utils.errors import InvalidInputError
from squidbench.utils.settings import settings_section


@settings_section
@dataclass(frozen=True)
class TransportConfig:
    geometry: Geometry = field(default_factory=Geometry)
    cascade: CascadeConfig = field(default_factory=CascadeConfig)
    propagation: PropagationConfig = field(default_factory=PropagationConfig)
    neutron: PrimarySpec = PrimarySpec(TransportSpecies.NEUTRON, 14.0)
    gamma: PrimarySpec = PrimarySpec(TransportSpecies.GAMMA, 1.25)
    neutron_model: NeutronDepositModel = field(default_factory=NeutronDepositModel)
    gamma_model: GammaDepositModel = field(default_factory=GammaDepositModel)
    scaling: Dict[TransportSpecies, InteractionScaling] = field(default_factory=default_scaling)
    count: int = 100_000
    batch_size: int = 5_000
    n_jobs: int = 1
    bootstrap_resamples: int = 200

    def __post_init__(self) -> None:
        if self.count < 1 or self.batch_size < 1:
            raise InvalidInputError("primary count and batch size must be positive")

    def primary(self, species: TransportSpecies) -> PrimarySpec:
        return self.neutron if species is TransportSpecies.NEUTRON else self.gamma

    def model(self, species: TransportSpecies) -> DepositModel:
        return self.neutron_model if species is TransportSpecies.NEUTRON else self.gamma_model


def batch_counts(count: int, batch_size: int) -> List[int]:
    full, rest = divmod(count, batch_size)
    return [batch_size] * full + ([rest] if rest else [])


def run_batch(cfg: TransportConfig, species: TransportSpecies, batch: int, count: int, seed: int) -> TransportTally:
    """One batch on its own stream ``[seed, species, batch]``, so results ignore the worker count."""
    rng = np.random.default_rng([seed, species.code, batch])
    trace = trace_batch(cfg.primary(species), count, cfg.geometry, rng, cfg.model(species), cfg.scaling.get(species))
    carriers = [
        cascade(DepositionEvent(tuple(position), float(energy)), cfg.cascade, rng, species)
        for position, energy in zip(trace.positions_mm.tolist(), trace.energies_mev.tolist())
    ]
    tally = propagate_carriers(
        carriers,
        cfg.geometry,
        rng,
        cfg.propagation,
        species,
        primaries=count,
        primary_energies_mev=trace.primary_energies_mev,
    )
    logging.debug(f"Batch {batch} of {species.value}: {len(carriers)} of {count} primaries interacted")
    return replace(tally, shielding_losses=trace.shielding_losses)


def run_transport(
    cfg: TransportConfig,
    species: TransportSpecies,
    count: Optional[int] = None,
    seed: int = 0,
    n_jobs: Optional[int] = None,
) -> TransportTally:
    count = cfg.count if count is None else count
    if count < 1:
        raise InvalidInputError(f"primary count must be positive, got {count}")
    n_jobs = cfg.n_jobs if n_jobs is None else n_jobs

    batches = batch_counts(count, cfg.batch_size)
    logging.info(f"Transporting {count} {species.value} primaries in {len(batches)} batches")
    if n_jobs == 1 or len(batches) < 2:
        tallies = [run_batch(cfg, species, index, size, seed) for index, size in enumerate(batches)]
    else:
        tallies = Parallel(n_jobs=n_jobs)(
            delayed(run_batch)(cfg, species, index, size, seed) for index, size in enumerate(batches)
        )

    tally = merge_tallies(tallies)
    residual = tally.ledger_residual()
    if residual > 1e-9:
        logging.warning(f"Energy ledger of the {species.value} run is off by {residual:.3g} relative")
    return tally


def run_comparison(
    cfg: TransportConfig,
    count: Optional[int] = None,
    seed: int = 0,
    n_jobs: Optional[int] = None,
) -> Tuple[TransportTally, TransportTally, RatioReport]:
    neutron = run_transport(cfg, TransportSpecies.NEUTRON, count, seed, n_jobs)
    gamma = run_transport(cfg, TransportSpecies.GAMMA, count, seed, n_jobs)
    report = compare_species(neutron, gamma, resamples=cfg.bootstrap_resamples, seed=seed)
    return neutron, gamma, report
