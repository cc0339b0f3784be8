"""
Two-slit experiment command
"""

import argparse
from typing import Any, Dict

from lab.commands._base import ScenarioCommand
from utils.scenario_config import WHICH_WAY


class TwoSlitCommand(ScenarioCommand):
    name = "twoslit"
    help = "2-D two-slit run with walker screen hits, single-slit controls and which-way selection"
    scenarios = ("double-slit",)
    default_scenario = "double-slit"

    def configure(self, parser: argparse.ArgumentParser) -> None:
        super().configure(parser)
        parser.add_argument("--which-way", choices=WHICH_WAY, help="slit selected behind the barrier")

    def overrides(self, args: argparse.Namespace) -> Dict[str, Any]:
        values = super().overrides(args)
        values["which_way"] = args.which_way
        return values


async def setup(lab):
    """Add the command to the lab"""
    lab.add_command(TwoSlitCommand(lab))
