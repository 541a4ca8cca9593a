from squidbench.transport.cascade import (
    CarrierSet,
    CascadeConfig,
    cascade,
)
from squidbench.transport.deposit import (
    GammaDepositModel,
    NeutronDepositModel,
    sample_deposit_energy,
)
from squidbench.transport.geometry import (
    Geometry,
    Layer,
    TransportSpecies,
)
from squidbench.transport.propagation import (
    PhononFate,
    PropagationConfig,
    propagate,
    propagate_carriers,
)
from squidbench.transport.runner import (
    TransportConfig,
    run_comparison,
    run_transport,
)
from squidbench.transport.tally import (
    RatioReport,
    SpeciesRatio,
    TransportTally,
    compare_species,
    merge_tallies,
)
from squidbench.transport.tracing import (
    DepositionEvent,
    InteractionScaling,
    PrimarySpec,
    TraceOutcome,
    TraceResult,
    trace_primary,
)
