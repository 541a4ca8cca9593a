import argparse

from squidbench.campaign import synthesize
from squidbench.commands.command import Command
from squidbench.injection import FaultKind


class SynthCommand(Command):
    def handle(self, args: argparse.Namespace) -> int:
        cfg = self.load_config(args)
        counts = {
            FaultKind.BURST: args.bursts,
            FaultKind.PEAK: args.peaks,
            FaultKind.SAWTOOTH: args.sawtooth,
            FaultKind.OSCILLATING: args.oscillating,
        }
        result = synthesize(cfg, args.duration_s, counts)
        print(f"Wrote {result.samples} samples with {result.events} events to {result.trace_path}")
        print(f"Ground truth: {result.plan_path}")
        return 0
