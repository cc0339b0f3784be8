"""
Wavefunction and walker commands: solve and walk
"""

import argparse
import logging
from typing import Any, Dict

from lab.commands._base import ScenarioCommand, parse_region

logger = logging.getLogger("scalelab.commands.simulation")


class SolveCommand(ScenarioCommand):
    """Evolve a wavefunction and report norm, energy and uncertainty diagnostics"""

    name = "solve"
    help = "Evolve a wavefunction (free-packet, plane-wave or sho)"
    scenarios = ("free-packet", "plane-wave", "sho")
    default_scenario = "sho"


class WalkCommand(ScenarioCommand):
    """Co-evolve walker ensembles with the wavefunction"""

    name = "walk"
    help = "Walker ensembles: Born-rule emergence or repeated measurement"
    scenarios = ("born-emergence", "measurement-repeat")
    default_scenario = "born-emergence"

    def configure(self, parser: argparse.ArgumentParser) -> None:
        super().configure(parser)
        parser.add_argument("--select-region", type=parse_region, metavar="LOWER:UPPER",
                            help="measurement region, e.g. 0:inf")

    def overrides(self, args: argparse.Namespace) -> Dict[str, Any]:
        values = super().overrides(args)
        if args.select_region:
            values["region_lower"], values["region_upper"] = args.select_region
        return values


async def setup(lab):
    """Add the commands to the lab"""
    lab.add_command(SolveCommand(lab))
    lab.add_command(WalkCommand(lab))
