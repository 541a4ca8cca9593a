import argparse

from squidbench.campaign import report_directory
from squidbench.commands.command import Command


class ReportCommand(Command):
    def handle(self, args: argparse.Namespace) -> int:
        print(report_directory(args.run_dir), end="")
        return 0
