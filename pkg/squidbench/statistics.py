from dataclasses import dataclass
import logging
import math
from pathlib import Path
from typing import (
    Any,
    Collection,
    Dict,
    List,
    Optional,
    Sequence,
    Tuple,
    Union,
)

import numpy as np
import pandas as pd
from scipy.optimize import bisect
from scipy.stats import poisson

from squidbench.injection import (
    BeamSchedule,
    Species,
)
from squidbench.utils.errors import InvalidInputError
from squidbench.utils.settings import settings_section

CI_XTOL = 1e-9


@settings_section
@dataclass(frozen=True)
class StatisticsConfig:
    confidence: float = 0.95
    full_spectrum: bool = False
    flatness_bins: int = 10

    def __post_init__(self) -> None:
        if not 0 < self.confidence < 1:
            raise InvalidInputError(f"confidence must lie in (0, 1), got {self.confidence}")
        if self.flatness_bins < 3:
            raise InvalidInputError("flatness test needs at least three bins")


class FluenceLedger:

    def __init__(
        self,
        schedule: BeamSchedule,
        species: Optional[Collection[Species]] = None,
        full_spectrum: bool = False,
    ) -> None:
        selected = [
            interval
            for interval in schedule.beam_intervals
            if species is None or interval.species in species
        ]
        self.schedule = schedule
        self.species = None if species is None else frozenset(species)
        self.full_spectrum = full_spectrum
        self._starts = np.array([interval.start_s for interval in selected], dtype=np.float64)
        self._ends = np.array([interval.end_s for interval in selected], dtype=np.float64)
        self._flux = np.array(
            [interval.flux * (interval.low_energy_factor if full_spectrum else 1.0) for interval in selected],
            dtype=np.float64,
        )

    def __call__(self, t: Union[float, np.ndarray]) -> Union[float, np.ndarray]:
        times = np.asarray(t, dtype=np.float64)
        elapsed = np.clip(times[..., None] - self._starts, 0.0, self._ends - self._starts)
        values = np.sum(elapsed * self._flux, axis=-1)
        if np.ndim(t) == 0:
            return float(values)
        return values

    @property
    def total(self) -> float:
        return float(np.sum((self._ends - self._starts) * self._flux))


def fluence(schedule: BeamSchedule, t: float, species_filter: Optional[Collection[Species]] = None, full_spectrum: bool = False) -> float:
    if not 0 <= t <= schedule.span_s:
        raise InvalidInputError(f"t = {t} s lies outside the campaign [0, {schedule.span_s}] s")
    return FluenceLedger(schedule, species_filter, full_spectrum)(t)


def _expand_upper(function, start: float) -> float:
    upper = max(start, 1.0)
    while function(upper) > 0:
        upper *= 2.0
    return upper


def poisson_ci(n: int, confidence: float = 0.95) -> Tuple[float, float]:
    """Exact two-sided interval for a Poisson mean from CDF inversion."""
    if not 0 < confidence < 1:
        raise InvalidInputError(f"confidence must lie in (0, 1), got {confidence}")
    if n < 0 or int(n) != n:
        raise InvalidInputError(f"count must be a non-negative integer, got {n}")

    n = int(n)
    tail = (1.0 - confidence) / 2.0

    if n == 0:
        low = 0.0
    else:
        # P(X >= n | lambda) rises from 0 at lambda = 0 to above one half at lambda = n
        low = bisect(lambda lam: poisson.sf(n - 1, lam) - tail, 0.0, float(n), xtol=CI_XTOL)

    upper_gap = lambda lam: poisson.cdf(n, lam) - tail  # noqa: E731
    high = bisect(upper_gap, float(n), _expand_upper(upper_gap, 2.0 * n + 10.0), xtol=CI_XTOL)
    return float(low), float(high)


@dataclass(frozen=True)
class CrossSectionEstimate:
    sigma: float
    ci_low: float
    ci_high: float
    n_events: int
    fluence: float
    confidence: float = 0.95

    @property
    def std_error(self) -> float:
        return math.sqrt(self.n_events) / self.fluence

    @property
    def half_width(self) -> float:
        return (self.ci_high - self.ci_low) / 2.0

    def contains(self, sigma: float) -> bool:
        return self.ci_low <= sigma <= self.ci_high

    def as_dict(self) -> Dict[str, Any]:
        return {
            "sigma_cm2": self.sigma,
            "ci_low_cm2": self.ci_low,
            "ci_high_cm2": self.ci_high,
            "ci_half_width_cm2": self.half_width,
            "std_error_cm2": self.std_error,
            "n_events": self.n_events,
            "fluence_cm2": self.fluence,
            "confidence": self.confidence,
        }


def cross_section(n_events: int, fluence_cm2: float, confidence: float = 0.95) -> CrossSectionEstimate:
    if not fluence_cm2 > 0:
        raise InvalidInputError(f"cross section needs a positive fluence, got {fluence_cm2}")
    low, high = poisson_ci(n_events, confidence)
    return CrossSectionEstimate(
        sigma=n_events / fluence_cm2,
        ci_low=low / fluence_cm2,
        ci_high=high / fluence_cm2,
        n_events=n_events,
        fluence=fluence_cm2,
        confidence=confidence,
    )


def cross_section_curve(event_times: Sequence[float], ledger: FluenceLedger, confidence: float = 0.95) -> List[CrossSectionEstimate]:
    times = np.asarray(event_times, dtype=np.float64)
    if np.any(np.diff(times) < 0):
        raise InvalidInputError("event times must be sorted")

    fluences = ledger(times) if len(times) else np.zeros(0)
    curve = []
    for k, (time_s, phi) in enumerate(zip(times.tolist(), np.atleast_1d(fluences).tolist()), start=1):
        if phi <= 0:
            logging.warning(f"Event {k} at {time_s:.3f} s has zero accumulated fluence; skipping curve point")
            continue
        curve.append(cross_section(k, phi, confidence))
    return curve


def curve_frame(curve: Sequence[CrossSectionEstimate]) -> pd.DataFrame:
    return pd.DataFrame(
        {
            "fluence": [point.fluence for point in curve],
            "sigma": [point.sigma for point in curve],
            "ci_low": [point.ci_low for point in curve],
            "ci_high": [point.ci_high for point in curve],
        },
        columns=["fluence", "sigma", "ci_low", "ci_high"],
    )


def write_curve(path: Union[str, Path], curve: Sequence[CrossSectionEstimate]) -> None:
    curve_frame(curve).to_csv(path, index=False, float_format="%.12g")


def _total(ledger: Union[FluenceLedger, float]) -> float:
    return ledger.total if isinstance(ledger, FluenceLedger) else float(ledger)


def gamma_inclusive_sigma(n_events: int, ledger_n: Union[FluenceLedger, float], ledger_gamma: Union[FluenceLedger, float]) -> float:
    """Cross section when gammas are assumed as effective as neutrons: ``n / (phi_n + phi_gamma)``."""
    phi_n = _total(ledger_n)
    phi_gamma = _total(ledger_gamma)
    if not phi_n > 0 or phi_gamma < 0:
        raise InvalidInputError("neutron fluence must be positive and gamma fluence non-negative")
    return n_events / (phi_n + phi_gamma)


@dataclass(frozen=True)
class FlatnessResult:
    slope: float
    std_error: float
    t_statistic: float
    bins: int
    bin_sigma: Tuple[float, ...]

    @property
    def consistent_with_zero(self) -> bool:
        return abs(self.t_statistic) < 2.0

    def as_dict(self) -> Dict[str, Any]:
        return {
            "slope_per_cm2": self.slope,
            "slope_std_error": None if math.isinf(self.std_error) else self.std_error,
            "t_statistic": self.t_statistic,
            "bins": self.bins,
            "consistent_with_zero": self.consistent_with_zero,
        }


def flatness_test(event_times: Sequence[float], ledger: FluenceLedger, bins: int = 10) -> FlatnessResult:
    """Regress per-bin cross sections on fluence over equal-fluence bins.

    Under a stationary cross section every bin count is Poisson with the same
    mean, so the pooled estimate fixes the per-bin variance and the slope's
    t statistic is approximately standard normal.
    """
    if bins < 3:
        raise InvalidInputError("flatness test needs at least three bins")

    total = ledger.total
    if not total > 0:
        raise InvalidInputError("flatness test needs a positive total fluence")

    width = total / bins
    phases = np.asarray(ledger(np.asarray(event_times, dtype=np.float64)), dtype=np.float64).reshape(-1)
    counts = np.bincount(np.minimum((phases / width).astype(np.int64), bins - 1), minlength=bins)
    sigma_bins = counts / width
    centers = (np.arange(bins) + 0.5) * width

    pooled = counts.sum() / total
    sxx = float(np.sum((centers - centers.mean()) ** 2))
    slope = float(np.sum((centers - centers.mean()) * (sigma_bins - sigma_bins.mean())) / sxx)
    std_error = math.sqrt(pooled / width / sxx) if pooled > 0 else math.inf
    t_statistic = slope / std_error if pooled > 0 else 0.0
    return FlatnessResult(
        slope=slope,
        std_error=std_error,
        t_statistic=float(t_statistic),
        bins=bins,
        bin_sigma=tuple(float(value) for value in sigma_bins),
    )
