import argparse
import json

from squidbench.campaign import cross_section_from_classified
from squidbench.commands.command import Command


class XsecCommand(Command):
    def handle(self, args: argparse.Namespace) -> int:
        cfg = self.load_config(args)
        stats = cross_section_from_classified(args.classified, cfg, args.out)
        print(json.dumps(stats, indent=2, sort_keys=True))
        return 0
