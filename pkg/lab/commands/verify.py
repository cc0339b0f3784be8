"""
Identity verification command
"""

import argparse
from typing import Any, Dict

from lab.commands._base import ScenarioCommand
from utils.scenario_config import IDENTITY_TARGETS


class VerifyCommand(ScenarioCommand):
    """Run the identity suite and fail on any residual outside its tolerance or order"""

    name = "verify"
    help = "Check the hydrodynamic, geodesic and operator identities on solver output"
    scenarios = ("verify-all",)
    default_scenario = "verify-all"

    def configure(self, parser: argparse.ArgumentParser) -> None:
        super().configure(parser)
        parser.add_argument("--target", choices=IDENTITY_TARGETS, help="which checks to run (default: all)")

    def overrides(self, args: argparse.Namespace) -> Dict[str, Any]:
        values = super().overrides(args)
        values["identity_target"] = args.target
        return values


async def setup(lab):
    """Add the command to the lab"""
    lab.add_command(VerifyCommand(lab))
