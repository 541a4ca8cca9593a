from dataclasses import (
    dataclass,
    field,
)
from functools import reduce
import logging
import math
from pathlib import Path
from typing import (
    Any,
    Dict,
    Iterable,
    List,
    Optional,
    Tuple,
    Union,
)

import numpy as np
import pandas as pd

from squidbench.transport.geometry import TransportSpecies
from squidbench.utils.errors import InvalidInputError
from squidbench.utils.file import write_json

DEPOSIT_EDGES_MEV = np.logspace(-4.0, 2.0, 61)
FRACTION_THRESHOLD_MEV = 1.25
TIME_PERCENTILE = 99.5
EV_PER_MEV = 1e6

_LEDGER_TERMS = ("film_ev", "frame_ev", "thermalized_ev", "escaped_ev", "prompt_loss_ev")


def _empty(dtype=np.float64) -> np.ndarray:
    return np.zeros(0, dtype=dtype)


def weighted_percentile(values: np.ndarray, weights: np.ndarray, q: float) -> float:
    """Smallest value whose cumulative weight reaches ``q`` percent; ``values`` must be sorted."""
    weights = np.asarray(weights, dtype=np.float64)
    total = float(np.sum(weights))
    if len(values) == 0 or not total > 0:
        return math.nan
    cumulative = np.cumsum(weights)
    index = int(np.searchsorted(cumulative, q / 100.0 * total, side="left"))
    return float(values[min(index, len(values) - 1)])


@dataclass(eq=False)
class TransportTally:
    """Per interacting primary rows plus the film absorption times they own.

    Totals are ``math.fsum`` over rows, so they do not depend on the order in
    which batches were merged.
    """

    species: TransportSpecies
    primaries: int = 0
    shielding_losses: Dict[str, int] = field(default_factory=dict)
    deposit_ev: np.ndarray = field(default_factory=_empty)
    primary_energy_mev: np.ndarray = field(default_factory=_empty)
    pair_count: np.ndarray = field(default_factory=lambda: _empty(np.int64))
    prompt_loss_ev: np.ndarray = field(default_factory=_empty)
    film_ev: np.ndarray = field(default_factory=_empty)
    frame_ev: np.ndarray = field(default_factory=_empty)
    thermalized_ev: np.ndarray = field(default_factory=_empty)
    escaped_ev: np.ndarray = field(default_factory=_empty)
    film_count: np.ndarray = field(default_factory=_empty)
    film_hits: np.ndarray = field(default_factory=lambda: _empty(np.int64))
    times_ns: np.ndarray = field(default_factory=_empty)
    time_weights: np.ndarray = field(default_factory=_empty)
    time_owner: np.ndarray = field(default_factory=lambda: _empty(np.int64))

    @property
    def interacting(self) -> int:
        return len(self.deposit_ev)

    @property
    def deposit_mev(self) -> np.ndarray:
        return self.deposit_ev / EV_PER_MEV

    @property
    def film_hit(self) -> np.ndarray:
        return self.film_hits > 0

    def total(self, name: str) -> float:
        return math.fsum(np.asarray(getattr(self, name), dtype=np.float64).tolist())

    def ledger(self) -> Dict[str, float]:
        return {name: self.total(name) for name in ("deposit_ev", *_LEDGER_TERMS)}

    def ledger_residual(self) -> float:
        ledger = self.ledger()
        deposited = ledger.pop("deposit_ev")
        if deposited == 0:
            return 0.0
        return abs(deposited - math.fsum(ledger.values())) / deposited

    def interaction_probability(self) -> float:
        return self.interacting / self.primaries if self.primaries else 0.0

    def fraction_above(self, threshold_mev: float = FRACTION_THRESHOLD_MEV) -> Optional[float]:
        if not self.interacting:
            return None
        return float(np.mean(self.deposit_mev > threshold_mev))

    def absorption_time_percentile(self, q: float = TIME_PERCENTILE) -> float:
        order = np.argsort(self.times_ns, kind="stable")
        return weighted_percentile(self.times_ns[order], self.time_weights[order], q)

    def histogram(self, edges: np.ndarray = DEPOSIT_EDGES_MEV) -> Tuple[np.ndarray, np.ndarray]:
        counts, _ = np.histogram(self.deposit_mev, bins=edges)
        return edges, counts

    def histogram_frame(self) -> pd.DataFrame:
        edges, counts = self.histogram()
        film_counts, _ = np.histogram(self.film_ev[self.film_hit] / EV_PER_MEV, bins=edges)
        return pd.DataFrame({
            "bin_low_MeV": edges[:-1],
            "bin_high_MeV": edges[1:],
            "substrate_count": counts,
            "film_count": film_counts,
        })

    def merge(self, other: "TransportTally") -> "TransportTally":
        if other.species is not self.species:
            raise InvalidInputError(f"cannot merge {other.species.value} tally into {self.species.value} tally")
        losses = dict(self.shielding_losses)
        for key, count in other.shielding_losses.items():
            losses[key] = losses.get(key, 0) + count

        def joined(name: str) -> np.ndarray:
            return np.concatenate((getattr(self, name), getattr(other, name)))

        return TransportTally(
            species=self.species,
            primaries=self.primaries + other.primaries,
            shielding_losses=losses,
            deposit_ev=joined("deposit_ev"),
            primary_energy_mev=joined("primary_energy_mev"),
            pair_count=joined("pair_count"),
            prompt_loss_ev=joined("prompt_loss_ev"),
            film_ev=joined("film_ev"),
            frame_ev=joined("frame_ev"),
            thermalized_ev=joined("thermalized_ev"),
            escaped_ev=joined("escaped_ev"),
            film_count=joined("film_count"),
            film_hits=joined("film_hits"),
            times_ns=joined("times_ns"),
            time_weights=joined("time_weights"),
            time_owner=np.concatenate((self.time_owner, other.time_owner + self.interacting)),
        )

    def as_dict(self) -> Dict[str, Any]:
        percentile = self.absorption_time_percentile()
        return {
            "species": self.species.value,
            "primaries": self.primaries,
            "interacting": self.interacting,
            "interaction_probability": self.interaction_probability(),
            "shielding_losses": dict(sorted(self.shielding_losses.items())),
            "fraction_above_1_25_MeV": self.fraction_above(),
            "mean_deposit_MeV": float(np.mean(self.deposit_mev)) if self.interacting else None,
            "ledger_eV": self.ledger(),
            "ledger_relative_residual": self.ledger_residual(),
            "film": {
                "absorbed_phonons": self.total("film_count"),
                "absorbed_energy_eV": self.total("film_ev"),
                "hit_primaries": int(np.count_nonzero(self.film_hit)),
                "absorption_time_p99_5_ns": None if math.isnan(percentile) else percentile,
            },
        }

    def write(self, out_dir: Union[str, Path]) -> List[Path]:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        summary = out_dir / f"tally_{self.species.value}.json"
        histogram = out_dir / f"deposits_{self.species.value}.csv"
        write_json(summary, self.as_dict())
        self.histogram_frame().to_csv(histogram, index=False, float_format="%.12g")
        return [summary, histogram]


def merge_tallies(tallies: Iterable[TransportTally]) -> TransportTally:
    tallies = list(tallies)
    if not tallies:
        raise InvalidInputError("nothing to merge")
    return reduce(TransportTally.merge, tallies)


@dataclass(frozen=True)
class SpeciesRatio:
    name: str
    value: Optional[float]
    ci_low: Optional[float]
    ci_high: Optional[float]

    @property
    def undefined(self) -> bool:
        return self.value is None

    @property
    def ci_width(self) -> Optional[float]:
        if self.ci_low is None or self.ci_high is None:
            return None
        return self.ci_high - self.ci_low

    def as_dict(self) -> Dict[str, Any]:
        return {
            "value": self.value,
            "ci_low": self.ci_low,
            "ci_high": self.ci_high,
            "undefined": self.undefined,
        }


@dataclass(frozen=True)
class RatioReport:
    ratios: Tuple[SpeciesRatio, ...]
    primaries: int
    resamples: int
    confidence: float

    def __getitem__(self, name: str) -> SpeciesRatio:
        for ratio in self.ratios:
            if ratio.name == name:
                return ratio
        raise KeyError(name)

    def as_dict(self) -> Dict[str, Any]:
        return {
            "primaries_per_species": self.primaries,
            "bootstrap_resamples": self.resamples,
            "confidence": self.confidence,
            "ratios": {ratio.name: ratio.as_dict() for ratio in self.ratios},
        }


RATIO_NAMES = ("substrate_energy", "film_phonons", "film_hit_primaries", "absorption_time_p99_5")


class _Metrics:

    def __init__(self, tally: TransportTally) -> None:
        self.tally = tally
        order = np.argsort(tally.times_ns, kind="stable")
        self.times = tally.times_ns[order]
        self.time_weights = tally.time_weights[order]
        self.time_owner = tally.time_owner[order]

    def evaluate(self, multiplicity: np.ndarray) -> np.ndarray:
        tally = self.tally
        return np.array([
            float(np.dot(multiplicity, tally.deposit_ev)),
            float(np.dot(multiplicity, tally.film_count)),
            float(np.dot(multiplicity, tally.film_hit)),
            weighted_percentile(self.times, self.time_weights * multiplicity[self.time_owner], TIME_PERCENTILE),
        ])

    def observed(self) -> np.ndarray:
        return self.evaluate(np.ones(self.tally.interacting))

    def resample(self, rng: np.random.Generator) -> np.ndarray:
        rows = self.tally.interacting
        if rows == 0:
            return self.evaluate(np.zeros(0))
        drawn = rng.binomial(self.tally.primaries, rows / self.tally.primaries)
        multiplicity = np.bincount(rng.integers(0, rows, drawn), minlength=rows).astype(np.float64)
        return self.evaluate(multiplicity)


def _ratio(numerator: np.ndarray, denominator: np.ndarray) -> np.ndarray:
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = numerator / denominator
    ratio[~(denominator > 0) | ~np.isfinite(numerator)] = np.nan
    return ratio


def compare_species(
    tally_n: TransportTally,
    tally_gamma: TransportTally,
    resamples: int = 200,
    confidence: float = 0.95,
    seed: int = 0,
) -> RatioReport:
    """Neutron over gamma ratios with bootstrap intervals.

    A resample redraws the interacting count from Binomial(N, k/N) and the
    interacting rows with replacement.
    """
    if tally_n.primaries != tally_gamma.primaries:
        raise InvalidInputError(
            f"species comparison needs equal primary counts, got {tally_n.primaries} and {tally_gamma.primaries}",
        )
    if not tally_n.primaries:
        raise InvalidInputError("species comparison needs at least one primary")
    if resamples < 1 or not 0 < confidence < 1:
        raise InvalidInputError("invalid bootstrap settings")

    neutron, gamma = _Metrics(tally_n), _Metrics(tally_gamma)
    observed = _ratio(neutron.observed(), gamma.observed())

    rng = np.random.default_rng([seed, resamples])
    samples = np.array([_ratio(neutron.resample(rng), gamma.resample(rng)) for _ in range(resamples)])

    tail = (1.0 - confidence) / 2.0 * 100.0
    ratios = []
    for column, name in enumerate(RATIO_NAMES):
        value = observed[column]
        finite = samples[:, column][np.isfinite(samples[:, column])]
        if np.isnan(value):
            logging.warning(f"Ratio {name} is undefined: the gamma metric is zero")
            ratios.append(SpeciesRatio(name=name, value=None, ci_low=None, ci_high=None))
            continue
        low, high = (np.percentile(finite, [tail, 100.0 - tail]) if len(finite) else (None, None))
        ratios.append(SpeciesRatio(
            name=name,
            value=float(value),
            ci_low=None if low is None else float(low),
            ci_high=None if high is None else float(high),
        ))
    return RatioReport(ratios=tuple(ratios), primaries=tally_n.primaries, resamples=resamples, confidence=confidence)
