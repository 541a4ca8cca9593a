import argparse
from pathlib import Path

from squidbench import __version__
from squidbench.commands.command import Command
from squidbench.config import config_to_dict
from squidbench.plots import (
    DEPOSITION_SVG,
    plot_deposition,
)
from squidbench.transport import (
    TransportSpecies,
    compare_species,
    run_transport,
)
from squidbench.utils.file import (
    write_json,
    write_manifest,
)

RATIOS_JSON = "ratios.json"


class TransportCommand(Command):
    def handle(self, args: argparse.Namespace) -> int:
        cfg = self.load_config(args)
        transport = cfg.transport
        out_dir = Path(args.out) if args.out else cfg.output_dir / "transport"
        out_dir.mkdir(parents=True, exist_ok=True)

        species = list(TransportSpecies) if args.species == "both" else [TransportSpecies(args.species)]
        tallies = [run_transport(transport, item, args.count, cfg.seed, args.jobs) for item in species]
        for tally in tallies:
            tally.write(out_dir)
            print(f"{tally.species.value}: {tally.interacting} of {tally.primaries} primaries interacted, "
                  f"ledger residual {tally.ledger_residual():.2e}")

        if len(tallies) == 2:
            report = compare_species(tallies[0], tallies[1], resamples=transport.bootstrap_resamples, seed=cfg.seed)
            write_json(out_dir / RATIOS_JSON, {
                "version": __version__,
                "seed": cfg.seed,
                "transport": config_to_dict(transport),
                **report.as_dict(),
            })
            for ratio in report.ratios:
                value = "undefined" if ratio.undefined else f"{ratio.value:.3f}"
                print(f"{ratio.name:<24}{value}")

        plot_deposition(out_dir / DEPOSITION_SVG, tallies)
        write_manifest(out_dir)
        return 0
