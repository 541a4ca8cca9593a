"""SVG figures of a campaign and of a transport run. Output is byte-stable for identical inputs."""
from pathlib import Path
from typing import (
    Iterable,
    Optional,
    Sequence,
    Union,
)

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402
import pandas as pd  # noqa: E402

from squidbench.injection import (  # noqa: E402
    BeamSchedule,
    EventClass,
)
from squidbench.transport.tally import (  # noqa: E402
    EV_PER_MEV,
    TransportTally,
)

TIMELINE_SVG = "timeline.svg"
CROSS_SECTION_SVG = "xsec_curve.svg"
SCATTER_SVG = "amplitude_duration.svg"
MIX_SVG = "peak_burst_mix.svg"
DEPOSITION_SVG = "deposition_spectrum.svg"

SECONDS_PER_HOUR = 3600.0

_STYLE = {
    "font.size": 10,
    "axes.titlesize": 11,
    "axes.labelsize": 10,
    "legend.fontsize": 8,
    "font.family": ["DejaVu Sans"],
    "mathtext.default": "regular",
    "svg.hashsalt": "squidbench",
    "svg.fonttype": "path",
}

_CLASS_COLORS = {
    EventClass.RADIATION_BURST: "tab:red",
    EventClass.RADIATION_PEAK: "tab:orange",
    EventClass.SPURIOUS_SAWTOOTH: "tab:blue",
    EventClass.SPURIOUS_OSCILLATING: "tab:cyan",
    EventClass.UNKNOWN: "tab:gray",
}


def _save(fig: plt.Figure, path: Union[str, Path]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata={"Date": None}, facecolor="white", edgecolor="none")
    plt.close(fig)
    return path


def plot_timeline(path: Union[str, Path], schedule: BeamSchedule, classified: pd.DataFrame, bin_s: float = 600.0) -> Path:
    """Event counts per time bin by class, beam-OFF periods shaded."""
    with plt.rc_context(_STYLE):
        fig, ax = plt.subplots(figsize=(8, 3.5))
        span_h = schedule.span_s / SECONDS_PER_HOUR
        edges = np.arange(0.0, schedule.span_s + bin_s, bin_s) / SECONDS_PER_HOUR

        off_start = 0.0
        for start, end in list(schedule.on_periods) + [(schedule.span_s, schedule.span_s)]:
            if start > off_start:
                ax.axvspan(off_start / SECONDS_PER_HOUR, start / SECONDS_PER_HOUR, color="0.85", lw=0, label="_off")
            off_start = max(off_start, end)

        for klass, color in _CLASS_COLORS.items():
            times = classified.loc[classified["class"] == klass.value, "trigger_time_s"].to_numpy(dtype=np.float64)
            counts, _ = np.histogram(times / SECONDS_PER_HOUR, bins=edges)
            ax.step(edges[:-1], counts, where="post", color=color, label=klass.value)

        ax.set_xlim(0.0, max(span_h, 1e-9))
        ax.set_xlabel("Time [h]")
        ax.set_ylabel(f"Counts per {bin_s / 60.0:g} min")
        ax.set_title(f"{schedule.name}: events with beam OFF periods shaded")
        ax.legend(loc="upper right", ncol=2)
        return _save(fig, path)


def plot_cross_section(path: Union[str, Path], curve: pd.DataFrame, generator_sigma: Optional[float] = None) -> Path:
    with plt.rc_context(_STYLE):
        fig, ax = plt.subplots(figsize=(6, 4))
        fluence = curve["fluence"].to_numpy(dtype=np.float64)
        ax.plot(fluence, curve["sigma"].to_numpy(dtype=np.float64), color="tab:blue", label="cross section")
        ax.fill_between(
            fluence,
            curve["ci_low"].to_numpy(dtype=np.float64),
            curve["ci_high"].to_numpy(dtype=np.float64),
            color="tab:blue",
            alpha=0.25,
            lw=0,
            label="95% CI",
        )
        if generator_sigma is not None:
            ax.axhline(generator_sigma, color="k", ls="--", lw=0.8, label="generator")
        ax.set_xlabel(r"Fluence [cm$^{-2}$]")
        ax.set_ylabel(r"$\sigma$ [cm$^2$]")
        ax.legend(loc="upper right")
        return _save(fig, path)


def plot_scatter(path: Union[str, Path], classified: pd.DataFrame) -> Path:
    """Maximum amplitude against duration of the radiation events."""
    with plt.rc_context(_STYLE):
        fig, ax = plt.subplots(figsize=(6, 4))
        for klass in (EventClass.RADIATION_BURST, EventClass.RADIATION_PEAK):
            rows = classified[classified["class"] == klass.value]
            ax.scatter(
                rows["duration_s"].to_numpy(dtype=np.float64) * 1e6,
                rows["max_amp_mV"].to_numpy(dtype=np.float64),
                s=12,
                color=_CLASS_COLORS[klass],
                label=klass.value,
            )
        ax.set_xscale("log")
        ax.set_xlabel("Duration [us]")
        ax.set_ylabel("Max amplitude [mV]")
        ax.legend(loc="upper left")
        return _save(fig, path)


def plot_mix(path: Union[str, Path], peak_pct: float, burst_pct: float, title: str = "") -> Path:
    with plt.rc_context(_STYLE):
        fig, ax = plt.subplots(figsize=(4, 4))
        bars = ax.bar(["peak", "burst"], [peak_pct, burst_pct], color=["tab:orange", "tab:red"])
        for bar, value in zip(bars, (peak_pct, burst_pct)):
            ax.annotate(f"{value:.1f}%", (bar.get_x() + bar.get_width() / 2.0, value), ha="center", va="bottom")
        ax.set_ylim(0.0, 110.0)
        ax.set_ylabel("Percentage of observed events [%]")
        ax.set_title(title)
        return _save(fig, path)


def plot_deposition(path: Union[str, Path], tallies: Sequence[TransportTally]) -> Path:
    """Log-log substrate deposit spectra per species with the film-absorbed energy spectrum inset."""
    with plt.rc_context(_STYLE):
        fig, ax = plt.subplots(figsize=(6, 4.5))
        inset = ax.inset_axes([0.58, 0.55, 0.38, 0.38])
        for tally in tallies:
            frame = tally.histogram_frame()
            centers = np.sqrt(frame["bin_low_MeV"].to_numpy() * frame["bin_high_MeV"].to_numpy())
            counts = frame["substrate_count"].to_numpy(dtype=np.float64)
            ax.step(centers, np.where(counts > 0, counts, np.nan), where="mid", label=tally.species.value)

            film = tally.film_ev[tally.film_hit]
            if len(film):
                inset.hist(film / EV_PER_MEV * 1e3, bins=30, histtype="step", label=tally.species.value)
        ax.set_xscale("log")
        ax.set_yscale("log")
        ax.set_xlabel("Deposited energy [MeV]")
        ax.set_ylabel("Counts")
        ax.legend(loc="lower left")
        inset.set_title("film-absorbed [keV]", fontsize=7)
        inset.tick_params(labelsize=6)
        return _save(fig, path)


def plot_campaign(
    out_dir: Union[str, Path],
    schedule: BeamSchedule,
    classified: pd.DataFrame,
    curve: pd.DataFrame,
    mix: Optional[dict],
    generator_sigma: Optional[float] = None,
) -> Iterable[Path]:
    out_dir = Path(out_dir)
    peak_pct = mix["peak_pct"] if mix else 0.0
    burst_pct = mix["burst_pct"] if mix else 0.0
    return [
        plot_timeline(out_dir / TIMELINE_SVG, schedule, classified),
        plot_cross_section(out_dir / CROSS_SECTION_SVG, curve, generator_sigma),
        plot_scatter(out_dir / SCATTER_SVG, classified),
        plot_mix(out_dir / MIX_SVG, peak_pct, burst_pct, title=schedule.name),
    ]
