from abc import (
    ABC,
    abstractmethod,
)
import argparse

from squidbench.config import (
    CampaignConfig,
    resolve_config,
)


class Command(ABC):
    def __init__(self, name: str) -> None:
        self._name = name

    def should_handle(self, args: argparse.Namespace) -> bool:
        return args.command == self._name

    @staticmethod
    def load_config(args: argparse.Namespace) -> CampaignConfig:
        return resolve_config(config_path=args.config, preset=args.preset, seed=args.seed, output=args.out)

    @abstractmethod
    def handle(self, args: argparse.Namespace) -> int:
        pass
