import argparse
from dataclasses import replace

from squidbench.acquisition import (
    AcquisitionMode,
    CaptureWindow,
)
from squidbench.campaign import (
    REPORT_JSON,
    run_campaign,
    summarize,
)
from squidbench.commands.command import Command
from squidbench.config import CampaignConfig


class CampaignCommand(Command):
    def handle(self, args: argparse.Namespace) -> int:
        cfg = self.__apply_flags(self.load_config(args), args)
        report = run_campaign(cfg, save_captures=not args.no_captures)
        print(summarize(report), end="")
        print(f"Report: {cfg.output_dir / REPORT_JSON}")
        return 0

    @staticmethod
    def __apply_flags(cfg: CampaignConfig, args: argparse.Namespace) -> CampaignConfig:
        trigger = cfg.trigger
        if args.threshold_mv is not None:
            trigger = replace(trigger, threshold_mv=args.threshold_mv)
        if args.dead_time_s is not None:
            trigger = replace(trigger, dead_time_s=args.dead_time_s)

        window = CaptureWindow(
            pre_s=cfg.window.pre_s if args.window_pre_ms is None else args.window_pre_ms * 1e-3,
            post_s=cfg.window.post_s if args.window_post_ms is None else args.window_post_ms * 1e-3,
        )

        acquisition = cfg.acquisition
        if args.mode is not None:
            acquisition = replace(acquisition, mode=AcquisitionMode(args.mode))
        return replace(cfg, trigger=trigger, window=window, acquisition=acquisition)
