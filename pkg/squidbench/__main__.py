import argparse
import json
import logging
import sys
from typing import (
    List,
    Optional,
)

from squidbench.commands import *  # pylint: disable=wildcard-import
from squidbench.config import CONFIG_ENV
from squidbench.utils.errors import BenchError

commands: List[Command] = [
    AnalyzeCommand("analyze"),
    CampaignCommand("campaign"),
    ReportCommand("report"),
    SynthCommand("synth"),
    TransportCommand("transport"),
    XsecCommand("xsec"),
]


def parse_args(argv: Optional[List[str]] = None) -> argparse.Namespace:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument(
        "--config",
        type=str,
        help=f"YAML configuration file. Default: ${CONFIG_ENV}, else the nile-e1 preset",
        default=None,
    )
    common.add_argument(
        "--preset",
        type=str,
        help="Shipped preset: nile-e1, chipir-e2, calliope-e3, transport-calibrated",
        default=None,
    )
    common.add_argument("--seed", type=int, help="Override the configured seed", default=None)
    common.add_argument("--out", type=str, help="Override the configured output directory", default=None)
    common.add_argument("-v", "--verbose", action="store_true", help="Log at DEBUG level")

    parser = argparse.ArgumentParser(prog="squidbench", description="SQUID radiation-test bench simulator")
    subparsers = parser.add_subparsers(dest="command")

    synth_parser = subparsers.add_parser("synth", parents=[common], help="Synthesize one trace with injected events")
    synth_parser.add_argument("--duration-s", type=float, help="Trace length in seconds. Default: 0.05", default=0.05)
    synth_parser.add_argument("--bursts", type=int, help="Burst faults. Default: 2", default=2)
    synth_parser.add_argument("--peaks", type=int, help="Peak faults. Default: 2", default=2)
    synth_parser.add_argument("--sawtooth", type=int, help="Spurious sawtooth events. Default: 1", default=1)
    synth_parser.add_argument("--oscillating", type=int, help="Spurious oscillating events. Default: 1", default=1)

    campaign_parser = subparsers.add_parser("campaign", parents=[common], help="Run a campaign end to end")
    campaign_parser.add_argument("--threshold-mv", type=float, help="Trigger threshold (mV)", default=None)
    campaign_parser.add_argument("--dead-time-s", type=float, help="Trigger dead time (s)", default=None)
    campaign_parser.add_argument("--window-pre-ms", type=float, help="Capture length before the trigger (ms)", default=None)
    campaign_parser.add_argument("--window-post-ms", type=float, help="Capture length after the trigger (ms)", default=None)
    mode = campaign_parser.add_mutually_exclusive_group()
    mode.add_argument("--dense", dest="mode", action="store_const", const="dense", help="Scan every sample")
    mode.add_argument("--sparse", dest="mode", action="store_const", const="sparse", help="Scan candidate regions only")
    campaign_parser.set_defaults(mode=None)
    campaign_parser.add_argument("--no-captures", action="store_true", help="Do not store capture traces")

    analyze_parser = subparsers.add_parser("analyze", parents=[common], help="Re-analyze stored captures")
    analyze_parser.add_argument("captures_dir", type=str, help="Directory of capture_*.bin files")

    xsec_parser = subparsers.add_parser("xsec", parents=[common], help="Cross section from a classified CSV")
    xsec_parser.add_argument("classified", type=str, help="classified.csv of a run")

    transport_parser = subparsers.add_parser("transport", parents=[common], help="Transport Monte Carlo")
    transport_parser.add_argument("--species", choices=["neutron", "gamma", "both"], default="both")
    transport_parser.add_argument("--count", type=int, help="Primaries per species", default=None)
    transport_parser.add_argument("--jobs", type=int, help="Parallel workers", default=None)

    report_parser = subparsers.add_parser("report", parents=[common], help="Summary and figures of a finished run")
    report_parser.add_argument("run_dir", type=str, help="Campaign output directory")

    return parser.parse_args(argv)


def main(argv: Optional[List[str]] = None) -> int:
    args = parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if getattr(args, "verbose", False) else logging.INFO,
        format="%(asctime)s %(levelname)s %(message)s",
    )

    for command in commands:
        if command.should_handle(args):
            try:
                return command.handle(args)
            except BenchError as error:
                print(json.dumps(error.to_json()), file=sys.stderr)
                return 3

    print("Invalid command")
    return 1


if __name__ == "__main__":
    sys.exit(main())
