import argparse

from squidbench.campaign import (
    CLASSIFIED_CSV,
    FEATURES_CSV,
    analyze_directory,
)
from squidbench.commands.command import Command


class AnalyzeCommand(Command):
    def handle(self, args: argparse.Namespace) -> int:
        cfg = self.load_config(args)
        out_dir = args.out or args.captures_dir
        events = analyze_directory(args.captures_dir, out_dir, cfg)
        print(f"Analyzed {len(events)} captures into {out_dir}/{FEATURES_CSV} and {out_dir}/{CLASSIFIED_CSV}")
        return 0
